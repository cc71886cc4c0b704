"""Transformer encoder wrapper: head-averaged attention + embeddings.

Wraps a HuggingFace BERT-style encoder run on pre-tokenized words.
Encoder layers are numbered 1..k; attention for layer j is the mean over
that layer's heads, and embeddings come from the final layer's hidden
states. Everything runs in inference mode on CPU unless a device is
given.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

log = logging.getLogger(__name__)


class SentenceTooLong(ValueError):
    """Sentence exceeds the encoder's maximum length after tokenization."""


@dataclass(frozen=True)
class EncodedSentence:
    n: int
    word_ids: tuple  # per model token: source word index or None
    special_mask: np.ndarray  # bool, True on special tokens
    attentions: dict[int, np.ndarray]  # layer (1-based) -> (n, n)
    embeddings: dict[int, np.ndarray]  # layer (1-based) -> (n, d)


class HfEncoder:
    def __init__(self, model, tokenizer, max_length: int = 512, device: str = "cpu"):
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.max_length = max_length
        self.device = device
        self.n_layers = int(model.config.num_hidden_layers)

    @classmethod
    def from_pretrained(cls, name: str, max_length: int = 512, device: str = "cpu") -> "HfEncoder":
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name, attn_implementation="eager")
        return cls(model, tokenizer, max_length=max_length, device=device)

    @property
    def hidden_size(self) -> int:
        return int(self.model.config.hidden_size)

    def encode(self, words: list[str], attn_layers: list[int]) -> EncodedSentence:
        """Run the frozen encoder on one pre-tokenized sentence."""
        for layer in attn_layers:
            if not 1 <= layer <= self.n_layers:
                raise ValueError(f"layer {layer} outside 1..{self.n_layers}")
        probe = self.tokenizer(list(words), is_split_into_words=True)
        if len(probe["input_ids"]) > self.max_length:
            raise SentenceTooLong(
                f"{len(probe['input_ids'])} model tokens exceed max length {self.max_length}"
            )
        encoding = self.tokenizer(
            list(words), is_split_into_words=True, return_tensors="pt"
        )
        word_ids = tuple(encoding.word_ids())
        inputs = {k: v.to(self.device) for k, v in encoding.items()}
        with torch.no_grad():
            out = self.model(**inputs, output_attentions=True, output_hidden_states=True)
        n = len(word_ids)
        attentions = {}
        for layer in attn_layers:
            mat = out.attentions[layer - 1][0].mean(dim=0).cpu().numpy().astype(np.float64)
            mat = mat / mat.sum(axis=1, keepdims=True)  # renormalize defensively
            attentions[layer] = mat
        final = self.n_layers
        embeddings = {final: out.hidden_states[final][0].cpu().numpy().astype(np.float64)}
        special = np.array([wid is None for wid in word_ids], dtype=bool)
        return EncodedSentence(
            n=n,
            word_ids=word_ids,
            special_mask=special,
            attentions=attentions,
            embeddings=embeddings,
        )
