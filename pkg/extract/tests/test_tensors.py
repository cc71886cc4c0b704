import json

import numpy as np
import pytest

from relmin_extract.corpusio import read_corpus
from relmin_extract.encoder import SentenceTooLong
from relmin_extract.tensors import extract_tensors
from conftest import build_model, sample_records, write_corpus


@pytest.fixture()
def records(tmp_path):
    return read_corpus(write_corpus(tmp_path / "c.jsonl", sample_records()))


class TestEncoder:
    def test_layers_and_shapes(self, tiny_encoder):
        enc = tiny_encoder.encode(["Aspirin", "inhibits", "COX1"], attn_layers=[10, 11])
        assert enc.n == 6  # [CLS] aspirin inhibits cox ##1 [SEP]
        assert set(enc.attentions) == {10, 11}
        assert enc.attentions[10].shape == (6, 6)
        assert set(enc.embeddings) == {12}
        assert enc.embeddings[12].shape == (6, 16)
        assert enc.special_mask.tolist() == [True, False, False, False, False, True]

    def test_rows_stochastic(self, tiny_encoder):
        enc = tiny_encoder.encode(["brain", "development"], attn_layers=[10])
        np.testing.assert_allclose(enc.attentions[10].sum(axis=1), 1.0, atol=1e-4)

    def test_too_long_raises(self, tiny_encoder):
        with pytest.raises(SentenceTooLong):
            tiny_encoder.encode(["fever"] * 100, attn_layers=[10])

    def test_bad_layer(self, tiny_encoder):
        with pytest.raises(ValueError, match="layer"):
            tiny_encoder.encode(["fever"], attn_layers=[13])


class TestExtractTensors:
    def test_pack_contents(self, tiny_encoder, records, tmp_path):
        out = tmp_path / "pack"
        summary = extract_tensors(records, tiny_encoder, [10, 11], out,
                                  manifest={"encoder": "tiny"})
        assert summary.written == ["r1", "r2", "r3"]
        index = json.loads((out / "index.json").read_text())
        assert index["manifest"] == {"encoder": "tiny"}
        entry = index["sentences"]["r1"]
        assert entry["n"] == 6
        assert entry["tok_e1"] == [1, 1]
        assert entry["tok_e2"] == [3, 4]  # COX1 -> cox ##1
        blob = (out / "r1.L10.attn").read_bytes()
        assert len(blob) == 4 * 6 * 6
        emb = (out / "r1.L12.emb").read_bytes()
        assert len(emb) == 4 * 6 * 16

    def test_spans_disjoint_and_in_range(self, tiny_encoder, records, tmp_path):
        extract_tensors(records, tiny_encoder, [10], tmp_path / "pack")
        index = json.loads((tmp_path / "pack" / "index.json").read_text())
        for entry in index["sentences"].values():
            n = entry["n"]
            (a0, a1), (b0, b1) = entry["tok_e1"], entry["tok_e2"]
            assert 0 <= a0 <= a1 < n and 0 <= b0 <= b1 < n
            assert a1 < b0 or b1 < a0

    def test_multiword_entity_span_length(self, tiny_encoder, records, tmp_path):
        extract_tensors(records, tiny_encoder, [10], tmp_path / "pack")
        index = json.loads((tmp_path / "pack" / "index.json").read_text())
        lo, hi = index["sentences"]["r2"]["tok_e2"]
        assert hi - lo + 1 == 3  # brain development -> 3 subwords

    def test_overlong_skipped_with_reason(self, tiny_encoder, tmp_path):
        recs = read_corpus(write_corpus(tmp_path / "c.jsonl", [
            sample_records()[0],
            {
                "id": "long",
                "tokens": ["fever"] * 100,
                "e1": {"start": 0, "end": 0},
                "e2": {"start": 2, "end": 2},
            },
        ]))
        summary = extract_tensors(recs, tiny_encoder, [10], tmp_path / "pack")
        assert summary.written == ["r1"]
        assert "too long" in summary.skipped["long"]

    def test_deterministic_re_extraction(self, tiny_tokenizer, records, tmp_path):
        from relmin_extract.encoder import HfEncoder

        blobs = []
        for name in ("a", "b"):
            encoder = HfEncoder(build_model(tiny_tokenizer), tiny_tokenizer, max_length=32)
            extract_tensors(records, encoder, [10, 11], tmp_path / name,
                            manifest={"encoder": "tiny", "seed": 0})
            blobs.append({
                p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())
            })
        assert blobs[0] == blobs[1]

    def test_core_toolkit_reads_pack(self, tiny_encoder, records, tmp_path):
        # interoperability: the core consumes exactly this format
        relmin = pytest.importorskip("relmin")
        from relmin.attnmap import load_attention_pack, classify_pack

        extract_tensors(records, tiny_encoder, [10, 11], tmp_path / "pack")
        store = load_attention_pack(tmp_path / "pack")
        assert sorted(store.ids()) == ["r1", "r2", "r3"]
        rec = store.attention("r1", 11)
        assert rec.n == 6
        preds = classify_pack("conex", store, store.ids(), 11, threshold=0.05)
        assert set(preds.values()) <= {1, -1}
        emb = store.embedding("r1", store.last_emb_layer())
        assert emb.d == 16
