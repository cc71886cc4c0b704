import pytest

from relmin_extract.corpusio import read_corpus
from relmin_extract.parses import ParseMismatch, extract_parses
from conftest import chain_backend, sample_records, write_corpus


@pytest.fixture()
def records(tmp_path):
    return read_corpus(write_corpus(tmp_path / "c.jsonl", sample_records()))


def parse_blocks(text):
    return [b for b in text.strip().split("\n\n") if b]


class TestExtractParses:
    def test_one_block_per_sentence_order_preserved(self, records, tmp_path):
        out = tmp_path / "parses.conllu"
        count = extract_parses(records, chain_backend, out)
        assert count == 3
        blocks = parse_blocks(out.read_text())
        ids = [b.splitlines()[0].split("= ")[1] for b in blocks]
        assert ids == ["r1", "r2", "r3"]

    def test_token_counts_and_columns(self, records, tmp_path):
        out = tmp_path / "parses.conllu"
        extract_parses(records, chain_backend, out)
        blocks = parse_blocks(out.read_text())
        rows = blocks[0].splitlines()[1:]
        assert len(rows) == 3
        cols = rows[0].split("\t")
        assert len(cols) == 10
        assert cols[1] == "Aspirin" and cols[3] == "NOUN"

    def test_exactly_one_root(self, records, tmp_path):
        out = tmp_path / "parses.conllu"
        extract_parses(records, chain_backend, out)
        for block in parse_blocks(out.read_text()):
            heads = [int(r.split("\t")[6]) for r in block.splitlines()[1:]]
            assert heads.count(0) == 1

    def test_multi_root_normalized(self, records, tmp_path):
        def two_roots(words):
            return [("NOUN", 0, "root") for _ in words]

        out = tmp_path / "parses.conllu"
        extract_parses(records[:1], two_roots, out)
        block = parse_blocks(out.read_text())[0]
        heads = [int(r.split("\t")[6]) for r in block.splitlines()[1:]]
        assert heads.count(0) == 1
        assert heads[1:] == [1, 1]  # extras re-attached to the first root

    def test_token_count_mismatch_raises(self, records, tmp_path):
        def drops_tokens(words):
            return [("NOUN", 0, "root")]

        with pytest.raises(ParseMismatch):
            extract_parses(records, drops_tokens, tmp_path / "p.conllu")

    def test_core_toolkit_reads_conllu(self, records, tmp_path):
        pytest.importorskip("relmin")
        from relmin.depgraph import load_conllu

        out = tmp_path / "parses.conllu"
        extract_parses(records, chain_backend, out)
        trees = load_conllu(out)
        assert len(trees) == 3
        assert trees["r1"].root == 0
