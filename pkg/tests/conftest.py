import pytest

from hyte.kg_data import Quadruple

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def write_split(path, rows):
    path.write_text("".join("\t".join(map(str, r)) + "\n" for r in rows), encoding="utf-8")


@pytest.fixture
def tiny_dataset(tmp_path):
    """Labelled three-split dataset spanning 2000-2003."""
    d = tmp_path / "raw"
    d.mkdir()
    train = [
        ("A", "worksAt", "X", "2000", "2001"),
        ("B", "worksAt", "X", "2001", "2002"),
        ("C", "worksAt", "Y", "2002", "2003"),
        ("A", "livesIn", "P", "2000", "2003"),
        ("B", "livesIn", "Q", "2001-05-02", "2001-09-09"),
        ("C", "livesIn", "P", "2003", "2003"),
        ("D", "worksAt", "Y", "2000", "2000"),
        ("D", "livesIn", "Q", "2002", "2003"),
    ]
    write_split(d / "train.txt", train)
    write_split(d / "valid.txt", [("A", "worksAt", "Y", "2002", "2003"), ("D", "livesIn", "P", "2000", "2001")])
    write_split(d / "test.txt", [("C", "worksAt", "X", "2000", "2001"), ("B", "livesIn", "P", "2003", "2003")])
    return d


def era_rows(kg):
    """Labelled rows of an id-encoded two-bin graph; bin b becomes year 2000 + b."""
    def rows(quads):
        return [(f"e{q.head}", f"r{q.relation}", f"e{q.tail}", str(2000 + q.start_bin), str(2000 + q.end_bin))
                for q in quads]
    return rows(kg.train), rows(kg.valid), rows(kg.test)


def random_quads(rng, n, n_entities, n_relations, n_bins):
    out = []
    for _ in range(n):
        s = int(rng.integers(n_bins))
        e = int(rng.integers(s, n_bins))
        out.append(Quadruple(int(rng.integers(n_entities)), int(rng.integers(n_relations)),
                             int(rng.integers(n_entities)), s, e))
    return out


def write_shaped_dataset(directory, n_entities, n_relations, sizes):
    """Distinct rows per split that together use every entity and relation label."""
    directory.mkdir(parents=True)
    i = 0
    for name, size in zip(("train", "valid", "test"), sizes):
        rows = []
        for _ in range(size):
            start = 1900 + i % 100
            rows.append((f"E{i % n_entities}", f"R{i % n_relations}", f"E{(7 * i + 3) % n_entities}",
                         str(start), str(start + i % 7)))
            i += 1
        write_split(directory / f"{name}.txt", rows)
