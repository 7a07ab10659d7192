import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typoattack import corpus
from typoattack._hashing import fnv1a64
from typoattack.corpus import RawRecord
from typoattack.errors import DataError


def rec(doc_id, pid, text="", labels=()):
    return RawRecord(doc_id, pid, text, frozenset(labels))


class TestTokenize:
    def test_mixed(self):
        assert corpus.tokenize("Chest X-ray 2x daily") == ["chest", "x", "ray", "2x", "daily"]

    @pytest.mark.parametrize("text", ["", "123 456", "  --  ", "1.5 / 20"])
    def test_no_tokens(self, text):
        assert corpus.tokenize(text) == []

    def test_keeps_digit_words(self):
        assert corpus.tokenize("CABG x4, HTN") == ["cabg", "x4", "htn"]

    @given(st.text())
    def test_idempotent(self, text):
        toks = corpus.tokenize(text)
        assert corpus.tokenize(" ".join(toks)) == toks
        for t in toks:
            assert t == t.lower() and any(c.isalpha() for c in t)


class TestMerge:
    def test_union(self):
        out = corpus.merge_by_patient([rec("d1", "p", "a", {"A"}), rec("d2", "p", "b", {"B"})])
        assert len(out) == 1
        assert out[0].labels == {"A", "B"}

    def test_identity_for_distinct_patients(self):
        recs = [rec("d1", "p1", "x", {"A"}), rec("d2", "p2", "y", {"B"})]
        assert corpus.merge_by_patient(recs) == recs

    def test_order_follows_file(self):
        recs = [rec("d1", "p1", "first", {"A"}), rec("d2", "p2", "other", {"B"}),
                rec("d3", "p1", "second", {"C"})]
        out = corpus.merge_by_patient(recs)
        assert [r.doc_id for r in out] == ["d1", "d2"]
        assert out[0].text == "first second"
        assert out[0].labels == {"A", "C"}


class TestLabelSpace:
    def test_frequency_order(self):
        recs = [rec(str(i), str(i), labels=ls) for i, ls in enumerate(
            [{"a", "b"}, {"a", "b"}, {"a", "b", "c"}, {"a"}, {"a"}])]
        space = corpus.build_label_space(recs, 2)
        assert space.codes == ("a", "b")
        assert space.index("a") == 0 and space.index("b") == 1
        assert space.counts == (5, 3)

    def test_tie_break(self):
        recs = [rec(str(i), str(i), labels={"b", "a"}) for i in range(5)]
        assert corpus.build_label_space(recs, 1).codes == ("a",)

    def test_too_few_codes(self):
        with pytest.raises(DataError, match="only 1 distinct"):
            corpus.build_label_space([rec("1", "1", labels={"a"})], 2)

    @settings(max_examples=30)
    @given(st.lists(st.sets(st.sampled_from("abcdefg"), min_size=1), min_size=3, max_size=20), st.randoms())
    def test_permutation_invariant(self, sets, rnd):
        recs = [rec(str(i), str(i), labels=s) for i, s in enumerate(sets)]
        n = len(set().union(*sets))
        shuffled = list(recs)
        rnd.shuffle(shuffled)
        assert corpus.build_label_space(recs, n) == corpus.build_label_space(shuffled, n)


class TestVocabulary:
    def test_threshold(self):
        v = corpus.build_vocabulary([["x", "x", "x", "y"]], min_count=3)
        assert "x" in v and "y" not in v
        assert v.lookup("y") == v.unk_id
        assert v.lookup("x") > v.unk_id

    def test_min_count_one(self):
        v = corpus.build_vocabulary([["a", "b"], ["c"]], min_count=1)
        assert all(t in v for t in "abc")

    def test_typo_is_unknown(self):
        v = corpus.build_vocabulary([["hike"] * 3])
        assert v.lookup("hoke") == v.unk_id

    def test_reserved(self):
        v = corpus.build_vocabulary([])
        assert v.itos[:2] == ["<PAD>", "<UNK>"]
        assert v.pad_id != v.unk_id
        # the literal pad string in a document is not the pad vector
        assert v.lookup("<PAD>") == v.unk_id

    @given(st.text(max_size=12))
    def test_lookup_total(self, s):
        v = corpus.build_vocabulary([["alpha"] * 3, ["beta"] * 3])
        idx = v.lookup(s)
        assert 0 <= idx < len(v)
        if s not in ("alpha", "beta"):
            assert idx == v.unk_id

    def test_file_round_trip(self, tmp_path):
        v = corpus.build_vocabulary([["b", "a", "a", "b", "c"]], min_count=2)
        v.save(tmp_path / "v.tsv")
        text = (tmp_path / "v.tsv").read_text()
        assert text.splitlines()[:2] == ["<PAD>\t0", "<UNK>\t0"]
        w = corpus.Vocabulary.load(tmp_path / "v.tsv")
        assert w.itos == v.itos and w.hash == v.hash

    def test_bad_file(self, tmp_path):
        (tmp_path / "v.tsv").write_text("a\t1\n")
        with pytest.raises(DataError):
            corpus.Vocabulary.load(tmp_path / "v.tsv")


class TestFilter:
    def test_drops_out_of_space(self):
        space = corpus.LabelSpace(("a", "b"), (2, 1))
        recs = [rec("1", "1", "x y", {"a"}), rec("2", "2", "x", {"z"}), rec("3", "3", "y", {"b", "z"}),
                rec("4", "4", "q", {"q"}), rec("5", "5", "w", {"a", "b"})]
        docs = corpus.filter_and_encode(recs, None, space)
        assert [d.doc_id for d in docs] == ["1", "3", "5"]
        assert docs[1].labels == {1}
        assert docs[0].tokens == ("x", "y")


class TestSplit:
    def test_fnv_reference_values(self):
        # published FNV-1a 64 test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_deterministic(self):
        recs = [rec(str(i), f"p{i}") for i in range(50)]
        split_spec = corpus.SplitSpec(salt=7)
        assert corpus.split(recs, split_spec) == corpus.split(recs, split_spec)

    def test_salt_changes_assignment(self):
        recs = [rec(str(i), f"p{i}") for i in range(200)]
        a = corpus.split(recs, corpus.SplitSpec(salt=1))
        b = corpus.split(recs, corpus.SplitSpec(salt=2))
        assert a != b

    def test_all_train(self):
        recs = [rec(str(i), f"p{i}") for i in range(20)]
        train, val, test = corpus.split(recs, corpus.SplitSpec(1.0, 0.0, 0.0))
        assert len(train) == 20 and not val and not test

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            corpus.SplitSpec(0.5, 0.2, 0.2)

    @pytest.mark.parametrize("fmt", ["p{}", "{:06d}", "patient_{}"])
    def test_balance(self, fmt):
        recs = [rec(str(i), fmt.format(i)) for i in range(1000)]
        parts = corpus.split(recs, corpus.SplitSpec())
        for part, frac in zip(parts, (0.78, 0.11, 0.11)):
            assert abs(len(part) / 1000 - frac) <= 0.04

    def test_partition(self):
        recs = [rec(str(i), f"p{i % 97}") for i in range(300)]
        parts = corpus.split(recs, corpus.SplitSpec(salt=3))
        assert sum(len(p) for p in parts) == 300
        pids = [{r.patient_id for r in p} for p in parts]
        assert not (pids[0] & pids[1] or pids[0] & pids[2] or pids[1] & pids[2])


class TestFiles:
    def test_raw_round_trip(self, tmp_path):
        recs = [rec("d1", "p1", "Héllo wörld", {"401.9"}), rec("d2", "p2", "x", {"a", "b"})]
        corpus.write_raw_corpus(recs, tmp_path / "c.jsonl")
        assert corpus.read_raw_corpus(tmp_path / "c.jsonl") == recs

    def test_malformed_line_reports_number(self, tmp_path):
        good = json.dumps({"doc_id": "1", "patient_id": "1", "text": "a", "labels": ["x"]})
        (tmp_path / "c.jsonl").write_text(good + "\n{not json\n")
        with pytest.raises(DataError, match=":2:"):
            corpus.read_raw_corpus(tmp_path / "c.jsonl")

    def test_missing_field(self, tmp_path):
        (tmp_path / "c.jsonl").write_text(json.dumps({"doc_id": "1", "text": "a", "labels": []}) + "\n")
        with pytest.raises(DataError, match=":1:"):
            corpus.read_raw_corpus(tmp_path / "c.jsonl")

    def test_duplicate_doc_id(self, tmp_path):
        line = json.dumps({"doc_id": "1", "patient_id": "1", "text": "a", "labels": ["x"]})
        (tmp_path / "c.jsonl").write_text(line + "\n" + line + "\n")
        with pytest.raises(DataError, match="duplicate"):
            corpus.read_raw_corpus(tmp_path / "c.jsonl")

    def test_documents_round_trip(self, tmp_path):
        docs = [corpus.Document("a", "p", ("x", "y"), frozenset({0, 3}))]
        corpus.write_documents(docs, tmp_path / "d.jsonl")
        assert corpus.read_documents(tmp_path / "d.jsonl") == docs


def test_processed_tokens_are_alphabetic():
    from typoattack import synthetic
    recs = synthetic.make_keyword_corpus(50, seed=3)
    recs[0] = RawRecord(recs[0].doc_id, recs[0].patient_id, recs[0].text + " 123 4.5 X-7", recs[0].labels)
    docs = corpus.filter_and_encode(recs, None, corpus.build_label_space(recs, 10))
    for d in docs:
        assert all(t.islower() or any(c.isdigit() for c in t) for t in d.tokens)
        assert all(any(c.isalpha() for c in t) for t in d.tokens)
    assert np.all([len(d.labels) > 0 for d in docs])
