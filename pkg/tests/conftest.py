import json
from pathlib import Path

import numpy as np
import pytest

from relmin import attnmap
from relmin.corpus import load_corpus

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def sard_paths():
    return FIXTURE_DIR / "sard" / "corpus.jsonl", FIXTURE_DIR / "sard" / "parses.conllu"


@pytest.fixture(scope="session")
def sard_corpus(sard_paths):
    return load_corpus(sard_paths[0])


def make_synthetic_pack(
    directory: Path,
    n_sentences: int = 50,
    seed: int = 0,
    layers=(10, 11),
    emb_layer: int = 12,
    d: int = 8,
    signal: bool = True,
) -> Path:
    """Random tensor pack + aligned corpus with plantable signal.

    Positive sentences concentrate both entities' attention on a shared
    hub token (high context overlap); negatives stay diffuse. Entity
    embeddings carry a linear class direction so trained heads have
    something to find. Writes ``corpus.jsonl`` next to the pack.
    """
    rng = np.random.default_rng(seed)
    sentences = {}
    corpus_lines = []
    for i in range(n_sentences):
        sid = f"syn{i:04d}"
        n = int(rng.integers(10, 16))
        label = 1 if rng.random() < 0.5 else -1
        special = np.zeros(n, dtype=int)
        special[0] = special[n - 1] = 1
        e1 = (1, 1 + int(rng.integers(0, 2)))
        e2 = (n - 3, n - 2)
        hub = int(rng.integers(e1[1] + 1, e2[0]))

        A = {}
        for layer in layers:
            # near-uniform base rows keep unrelated pairs' context divergence
            # below the decision grid; the planted hub dominates positives
            rows = rng.dirichlet(np.full(n, 300.0), size=n)
            if signal and label == 1:
                onehot = np.zeros(n)
                onehot[hub] = 1.0
                for row in range(e1[0], e1[1] + 1):
                    rows[row] = 0.15 * rows[row] + 0.85 * onehot
                for row in range(e2[0], e2[1] + 1):
                    rows[row] = 0.15 * rows[row] + 0.85 * onehot
            A[layer] = rows
        H = rng.normal(size=(n, d))
        if signal:
            direction = np.ones(d) / np.sqrt(d)
            for row in list(range(e1[0], e1[1] + 1)) + list(range(e2[0], e2[1] + 1)):
                H[row] += 2.5 * label * direction
        sentences[sid] = {
            "attn": A,
            "emb": {emb_layer: H},
            "special_mask": special,
            "tok_e1": e1,
            "tok_e2": e2,
        }
        # corpus word space: content tokens only ([CLS]/[SEP] stripped)
        corpus_lines.append(
            json.dumps(
                {
                    "id": sid,
                    "tokens": [f"w{k}" for k in range(n - 2)],
                    "e1": {"start": e1[0] - 1, "end": e1[1] - 1},
                    "e2": {"start": e2[0] - 1, "end": e2[1] - 1},
                    "label": label,
                }
            )
        )
    attnmap.write_pack(directory, sentences, manifest={"source": "synthetic", "seed": seed})
    (directory.parent / "corpus.jsonl").write_text("\n".join(corpus_lines) + "\n")
    return directory


@pytest.fixture(scope="session")
def synthetic_pack(tmp_path_factory):
    base = tmp_path_factory.mktemp("pack")
    pack_dir = make_synthetic_pack(base / "tensors", n_sentences=60, seed=7)
    return pack_dir, base / "corpus.jsonl"


def gaussian_instances(n: int, pi_plus: float, seed: int):
    """2-feature class-conditional Gaussians with unequal spread.

    The asymmetric covariances make biased training on contaminated sets
    visibly suboptimal rather than boundary-neutral.
    """
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < pi_plus, 1, -1)
    X = np.empty((n, 2))
    pos = y == 1
    X[pos] = rng.normal(loc=(1.6, 1.6), scale=1.0, size=(pos.sum(), 2))
    X[~pos] = rng.normal(loc=(-1.2, -1.2), scale=1.8, size=((~pos).sum(), 2))
    return X, y
