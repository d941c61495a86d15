import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyte.kg_data import (
    DataError,
    DatePolicy,
    Quadruple,
    QuadrupleFormatError,
    RawQuadruple,
    TemporalKG,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    parse_quadruple_file,
    parse_year,
    read_dataset_dir,
    read_encoded_split,
    write_encoded_split,
)
from hyte.time_bins import TimeBins

from conftest import random_quads, write_shaped_dataset, write_split


def test_parse_drops_month_and_day(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("A\twasBornIn\tX\t1990-02-03\t1990-02-03\n")
    assert parse_quadruple_file(p) == [RawQuadruple("A", "wasBornIn", "X", 1990, 1990)]


def test_start_after_end_names_the_fact(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("A\tworksAt\tY\t1990\t1985\n")
    with pytest.raises(DataError, match="start after end") as exc:
        parse_quadruple_file(p)
    assert "worksAt" in str(exc.value)


def test_malformed_row_reports_line(tmp_path, caplog):
    p = tmp_path / "f.txt"
    p.write_text(
        "A\tr\tB\t2000\t2001\n"
        "B\tr\tC\t2001\t2002\n"
        "C\tr\tD\t2002\n"
        "D\tr\tE\t2003\t2004\n"
        "E\tr\tA\t2004\t2004\n"
    )
    with pytest.raises(QuadrupleFormatError, match="line 3"):
        parse_quadruple_file(p)
    rows = parse_quadruple_file(p, on_error="skip")
    assert len(rows) == 4
    assert "line 3" in caplog.text


@pytest.mark.parametrize("text,year", [
    ("1990", 1990), ("1990-02-03", 1990), ("-0044", -44), ("####", None), ("19##", None), ("2001-##-##", 2001),
])
def test_parse_year(text, year):
    assert parse_year(text) == year


def test_open_dates(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("A\tr\tB\t####\t####\nA\tr\tC\t1990\t####\nA\tr\tD\t####\t1995\n")
    assert parse_quadruple_file(p) == []
    got = parse_quadruple_file(p, DatePolicy(half_open="collapse"))
    assert got == [RawQuadruple("A", "r", "C", 1990, 1990), RawQuadruple("A", "r", "D", 1995, 1995)]


def test_vocabulary_counts_distinct():
    vocab = build_vocabulary([RawQuadruple("A", "r", "X", 1, 1), RawQuadruple("Y", "r", "A", 1, 2)])
    assert vocab.n_entities == 3
    assert vocab.n_relations == 1
    with pytest.raises(DataError):
        build_vocabulary([])


def test_vocabulary_save_load(tmp_path):
    vocab = build_vocabulary([RawQuadruple("A b", "r", "X", 1, 1), RawQuadruple("Y", "s", "A b", 1, 2)])
    vocab.save(tmp_path)
    back = Vocabulary.load(tmp_path)
    assert back.entities == vocab.entities and back.relations == vocab.relations


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABCDEFG"), st.sampled_from(["r", "s", "t"]),
                          st.sampled_from("ABCDEFG"), st.integers(1950, 2020), st.integers(0, 10)),
                min_size=1, max_size=30))
def test_encode_decode_round_trip(rows):
    raw = [RawQuadruple(h, r, t, y, y + d) for h, r, t, y, d in rows]
    vocab = build_vocabulary(raw)
    for label, i in vocab.entities.items():
        assert vocab.entity_label(i) == label
    # every year its own bin, so decoding recovers exact years
    lo, hi = min(q.start_year for q in raw), max(q.end_year for q in raw)
    bins = TimeBins(tuple((y, y) for y in range(lo, hi + 1)))
    for q, enc in zip(raw, encode(raw, vocab, bins)):
        h, r, t, (s0, _), (_, e1) = decode(enc, vocab, bins)
        assert (h, r, t) == (q.head, q.relation, q.tail)
        assert s0 == q.start_year and e1 == q.end_year


def test_interval_expansion():
    kg = TemporalKG([Quadruple(0, 0, 1, 2, 4), Quadruple(1, 0, 2, 5, 5)], [], [], n_bins=7)
    members = [b for b in range(7) if (0, 0, 1) in kg.per_bin_positives[b]]
    assert members == [2, 3, 4]
    assert [b for b in range(7) if (1, 0, 2) in kg.per_bin_positives[b]] == [5]


def test_per_bin_sizes_match_brute_force():
    quads = [
        Quadruple(0, 0, 1, 0, 3), Quadruple(0, 0, 1, 2, 5), Quadruple(1, 1, 2, 1, 1),
        Quadruple(2, 0, 3, 0, 5), Quadruple(3, 1, 0, 4, 5), Quadruple(1, 1, 2, 3, 4),
    ]
    kg = TemporalKG(quads, [], [], n_bins=6)
    for b in range(6):
        brute = {q.triple for q in quads for bb in range(q.start_bin, q.end_bin + 1) if bb == b}
        assert kg.per_bin_positives[b] == brute
    assert [len(s) for s in kg.per_bin_positives] == [2, 3, 2, 3, 4, 3]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_training_examples_are_expanded_incidences(seed):
    rng = np.random.default_rng(seed)
    quads = random_quads(rng, 15, 6, 2, 4)
    kg = TemporalKG(quads, [], [], n_bins=4, n_entities=6, n_relations=2)
    ex = kg.training_examples()
    assert len(ex) == sum(len(s) for s in kg.per_bin_positives)
    assert len({tuple(r) for r in ex.tolist()}) == len(ex)
    for h, r, t, b in ex.tolist():
        assert (h, r, t) in kg.per_bin_positives[b]
    assert len(kg.training_examples(temporal=False)) == len({q.triple for q in quads})


def test_global_positives_span_splits_and_time():
    kg = TemporalKG([Quadruple(0, 0, 1, 0, 0)], [Quadruple(1, 0, 2, 1, 1)], [Quadruple(2, 0, 0, 0, 1)], n_bins=2)
    assert kg.global_positives == {(0, 0, 1), (1, 0, 2), (2, 0, 0)}
    keys = kg.triple_key(np.array([0, 1, 2, 0]), np.array([0, 0, 0, 0]), np.array([1, 2, 0, 2]))
    assert kg.contains_keys(keys).tolist() == [True, True, True, False]
    assert kg.known_tails_at(1, 0, 1).tolist() == [2]
    assert kg.known_tails_at(1, 0, 0).tolist() == []


def test_bin_out_of_range():
    with pytest.raises(DataError):
        TemporalKG([Quadruple(0, 0, 1, 0, 3)], [], [], n_bins=2)


def test_encoded_split_round_trip(tmp_path):
    quads = [Quadruple(0, 1, 2, 0, 3), Quadruple(4, 0, 1, 2, 2)]
    write_encoded_split(tmp_path / "s.tsv", quads)
    assert read_encoded_split(tmp_path / "s.tsv") == quads


def test_read_dataset_dir_errors(tmp_path, tiny_dataset):
    (tiny_dataset / "valid.txt").unlink()
    with pytest.raises(DataError, match="valid.txt"):
        read_dataset_dir(tiny_dataset)
    d = tmp_path / "empty"
    d.mkdir()
    for name in ("train", "valid", "test"):
        write_split(d / f"{name}.txt", [])
    with pytest.raises(DataError, match="train"):
        read_dataset_dir(d)


def test_duplicates_dropped_within_split(tmp_path):
    d = tmp_path / "dup"
    d.mkdir()
    row = ("A", "r", "B", "2000", "2001")
    write_split(d / "train.txt", [row, row, ("A", "r", "B", "2000", "2002")])
    write_split(d / "valid.txt", [row])
    write_split(d / "test.txt", [])
    splits = read_dataset_dir(d)
    assert len(splits["train"]) == 2 and len(splits["valid"]) == 1


def test_time_bins_fixture_encodes_interval():
    bins = TimeBins(((1990, 1995), (1996, 2000)))
    (q,) = encode([RawQuadruple("A", "r", "B", 1993, 2014)], build_vocabulary([RawQuadruple("A", "r", "B", 1, 1)]), bins)
    assert (q.start_bin, q.end_bin) == (0, 1)


def test_wikidata_shaped_vocabulary(tmp_path):
    write_shaped_dataset(tmp_path / "wd", 12554, 24, (32497, 4062, 4062))
    splits = read_dataset_dir(tmp_path / "wd")
    vocab = build_vocabulary(splits["train"] + splits["valid"] + splits["test"])
    assert (vocab.n_entities, vocab.n_relations) == (12554, 24)
    assert [len(splits[s]) for s in ("train", "valid", "test")] == [32497, 4062, 4062]
