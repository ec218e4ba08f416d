import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bertcnn.corpus import (
    DataSplit,
    LabeledTweet,
    TSVSchema,
    class_distribution,
    load_tsv,
    split,
    write_split,
    write_tsv,
)
from bertcnn.errors import CorpusDecodeError, LabelParseError, SchemaError, StratificationError, TSVFormatError


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _synthetic(n_neg, n_pos):
    rows = [LabeledTweet(str(i), f"tweet number {i}", 0) for i in range(n_neg)]
    rows += [LabeledTweet(str(n_neg + i), f"offensive tweet {i}", 1) for i in range(n_pos)]
    return rows


def test_three_row_labels(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttweet\tsubtask_a\n1\tx\tOFF\n2\ty\tNOT\n3\tz\tOFF\n")
    records = load_tsv(p)
    assert [r.label for r in records] == [1, 0, 1]
    assert [r.id for r in records] == ["1", "2", "3"]


def test_header_only_file(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttweet\tsubtask_a\n")
    assert load_tsv(p) == []


def test_missing_column_names_it(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttext\tsubtask_a\n1\tx\tOFF\n")
    with pytest.raises(SchemaError, match="tweet"):
        load_tsv(p)


def test_unknown_label_reports_row(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttweet\tsubtask_a\n1\tx\tOFF\n2\ty\tMAYBE\n")
    with pytest.raises(LabelParseError) as info:
        load_tsv(p)
    assert info.value.row == 3


def test_bad_utf8_reports_byte_offset(tmp_path):
    p = tmp_path / "a.tsv"
    p.write_bytes(b"id\ttweet\tsubtask_a\n1\tab\xff\tOFF\n")
    with pytest.raises(CorpusDecodeError) as info:
        load_tsv(p)
    assert info.value.offset == len(b"id\ttweet\tsubtask_a\n1\tab")


def test_literal_tab_is_a_parse_error(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttweet\tsubtask_a\n1\tx\ty\tOFF\n")
    with pytest.raises(TSVFormatError):
        load_tsv(p)


def test_label_free_mode(tmp_path):
    p = _write(tmp_path / "a.tsv", "id\ttweet\n1\thello\n")
    assert load_tsv(p, labeled=False) == [LabeledTweet("1", "hello", None)]
    assert load_tsv(p, labeled=None)[0].label is None
    with pytest.raises(SchemaError, match="subtask_a"):
        load_tsv(p)


def test_custom_schema(tmp_path):
    p = _write(tmp_path / "a.tsv", "label\tidx\tcontent\nNOT\t7\thi\n")
    records = load_tsv(p, TSVSchema(id="idx", text="content", label="label"))
    assert records == [LabeledTweet("7", "hi", 0)]


def test_round_trip(tmp_path, fixtures):
    records = load_tsv(fixtures / "toy.tsv")
    write_tsv(records, tmp_path / "copy.tsv")
    assert load_tsv(tmp_path / "copy.tsv") == records


def test_arabic_sized_file(tmp_path):
    # Arabic train+dev: 5,785 + 626 negative, 1,415 + 174 positive
    records = _synthetic(5785 + 626, 1415 + 174)
    write_tsv(records, tmp_path / "ar.tsv")
    loaded = load_tsv(tmp_path / "ar.tsv")
    assert len(loaded) == 8000
    assert sum(r.label for r in loaded) == 1589
    s = split(loaded, 0.9, seed=3)
    assert (len(s.train), len(s.dev)) == (7200, 800)


def test_small_split_is_deterministic():
    data = _synthetic(5, 5)
    a = split(data, 0.9, seed=7)
    b = split(data, 0.9, seed=7)
    assert (len(a.train), len(a.dev)) == (9, 1)
    assert a == b


def test_turkish_rounding_rule():
    # 0.9 * 31,756 = 28,580.4 -> round half up -> 28,580
    data = _synthetic(25627, 6129)
    assert len(data) == 31756
    s = split(data, 0.9, seed=0)
    assert len(s.train) == 28580
    assert len(s.dev) == 3176


def test_class_with_one_member_fails():
    with pytest.raises(StratificationError):
        split(_synthetic(5, 1), 0.9, 0)


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1])
def test_ratio_bounds(ratio):
    with pytest.raises(ValueError):
        split(_synthetic(3, 3), ratio, 0)


def test_class_distribution():
    assert class_distribution([]) == {"NOT": 0, "OFF": 0}
    assert class_distribution(_synthetic(1120, 424)) == {"NOT": 1120, "OFF": 424}
    assert class_distribution(_synthetic(23084, 4885)) == {"NOT": 23084, "OFF": 4885}


@settings(max_examples=200, deadline=None)
@given(
    n_neg=st.integers(2, 60),
    n_pos=st.integers(2, 60),
    ratio=st.sampled_from([0.5, 0.7, 0.8, 0.9, 0.95]),
    seed=st.integers(0, 10_000),
)
def test_split_is_stratified_partition(n_neg, n_pos, ratio, seed):
    data = _synthetic(n_neg, n_pos)
    s = split(data, ratio, seed)
    ids = Counter(r.id for r in s.train) + Counter(r.id for r in s.dev)
    assert ids == Counter(r.id for r in data)
    n = len(data)
    assert len(s.train) == int(ratio * n + 0.5 + 1e-9)
    for label, size in ((0, n_neg), (1, n_pos)):
        in_train = sum(1 for r in s.train if r.label == label)
        assert abs(in_train - ratio * size) <= 1


def test_split_manifest(tmp_path, fixtures):
    records = load_tsv(fixtures / "toy.tsv")
    s = split(records, 0.9, 42)
    write_split(s, tmp_path)
    side = json.loads((tmp_path / "split.json").read_text())
    assert side["seed"] == 42 and side["ratio"] == 0.9
    assert side["counts"]["train"]["OFF"] + side["counts"]["dev"]["OFF"] == 10
    assert load_tsv(tmp_path / "train.tsv") == list(s.train)
    assert load_tsv(tmp_path / "dev.tsv") == list(s.dev)
