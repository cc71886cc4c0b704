"""Upstream extraction for the relation-detection toolkit.

Produces the two artifacts the core consumes, in its documented file
formats: CoNLL-U dependency parses with universal POS tags, and tensor
packs of head-averaged attention matrices plus last-layer token
embeddings with entity spans aligned into model-token space.
"""

__version__ = "0.1.0"
