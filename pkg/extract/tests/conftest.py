import json
from pathlib import Path

import pytest
import torch

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "aspirin", "inhibits", "cox", "##1", "brain", "develop", "##ment",
    "rett", "syndrome", "affects", "fever", "reduces", "the", "drug",
]


@pytest.fixture(scope="session")
def tiny_tokenizer(tmp_path_factory):
    from transformers import BertTokenizerFast

    vocab_dir = tmp_path_factory.mktemp("vocab")
    (vocab_dir / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    return BertTokenizerFast.from_pretrained(str(vocab_dir))


def build_model(tokenizer):
    from transformers import BertConfig, BertModel

    config = BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=16,
        num_hidden_layers=12,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=128,
        attn_implementation="eager",
    )
    torch.manual_seed(0)
    return BertModel(config)


@pytest.fixture(scope="session")
def tiny_encoder(tiny_tokenizer):
    from relmin_extract.encoder import HfEncoder

    return HfEncoder(build_model(tiny_tokenizer), tiny_tokenizer, max_length=32)


def write_corpus(path: Path, records: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return path


def sample_records():
    return [
        {
            "id": "r1",
            "tokens": ["Aspirin", "inhibits", "COX1"],
            "e1": {"start": 0, "end": 0},
            "e2": {"start": 2, "end": 2},
            "label": 1,
        },
        {
            "id": "r2",
            "tokens": ["Rett", "syndrome", "affects", "brain", "development"],
            "e1": {"start": 0, "end": 1},
            "e2": {"start": 3, "end": 4},
            "label": 1,
        },
        {
            "id": "r3",
            "tokens": ["the", "drug", "reduces", "fever"],
            "e1": {"start": 1, "end": 1},
            "e2": {"start": 3, "end": 3},
            "label": -1,
        },
    ]


def chain_backend(words):
    """Deterministic stub parser: token 1 is root, others attach leftward."""
    rows = []
    for i, word in enumerate(words):
        upos = "VERB" if word.endswith("s") else "NOUN"
        head = 0 if i == 0 else i  # 1-based head = previous token
        rows.append((upos, head, "root" if i == 0 else "dep"))
    return rows
