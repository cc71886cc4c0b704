"""Relation detection between entity pairs with minimal supervision.

Batch toolkit combining unsupervised dependency-path and attention-based
classifiers, pairwise-comparison data generation, and pointwise
risk-minimization training of a lightweight classifier head.
"""

__version__ = "0.1.0"
