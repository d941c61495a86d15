import json

import numpy as np
import pytest

from hyte.kg_data import Quadruple, TemporalKG
from hyte.model import ModelKind, densify, init_embeddings, load_store
from hyte.synthetic import toy_kg
from hyte.trainer import (
    NumericError,
    TrainConfig,
    batch_objective,
    loss_term,
    reg_penalty,
    train,
)

from oracles import fd_gradient, max_relative_error

TOY = dict(dim=8, margin=1.0, learning_rate=0.01, batch_size=2, reg_weight=1.0)


def test_loss_term_examples():
    assert loss_term(0.0, 11.0, 10.0) == 0.0
    assert loss_term(2.0, 2.0, 10.0) == 10.0
    assert loss_term(3.5, 2.0, 10.0) == 11.5


def test_reg_penalty():
    assert reg_penalty(np.array([[0.6, 0.8], [0.1, 0.0]]), 1.0)[0] == pytest.approx(0.0)
    e = np.array([[1.0, 1.0]])
    pen, grad = reg_penalty(e, 1.0)
    assert pen == pytest.approx(1.0)
    assert np.allclose(grad, 2 * e)
    # finite differences of the penalty itself
    h = 1e-6
    for j in range(2):
        d = np.zeros_like(e)
        d[0, j] = h
        fd = (reg_penalty(e + d, 1.0)[0] - reg_penalty(e - d, 1.0)[0]) / (2 * h)
        assert fd == pytest.approx(grad[0, j], rel=1e-6)
    assert reg_penalty(np.array([[5.0, 5.0]]), 0.0)[0] == 0.0


@pytest.mark.parametrize("kind", ["transe", "transh", "hyte"])
def test_batch_objective_gradient(kind):
    m = ModelKind(kind, "l2")
    store = init_embeddings((6, 2, 3), 8, 3, m)
    pos = np.array([[0, 0, 1, 0], [2, 1, 3, 2], [4, 0, 5, 1]])
    neg = np.array([[0, 0, 5, 0], [1, 1, 3, 2], [4, 0, 2, 1]])
    _, _, n_active, pieces = batch_objective(store, m, pos, neg, 50.0, 0.7)
    assert n_active == 3
    num = fd_gradient(store, m, pos, neg, 50.0, 0.7)
    assert max_relative_error(densify(store, pieces), num) < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dim=0)
    with pytest.raises(ValueError):
        TrainConfig(model="rescal")
    with pytest.raises(ValueError):
        TrainConfig(time_policy="end")
    assert TrainConfig().margin == 10.0


@pytest.mark.parametrize("kind", ["transh", "hyte"])
def test_normals_unit_after_every_step(kind):
    worst = []

    def check(store):
        w = store.time_normals if kind == "hyte" else store.relation_normals
        worst.append(np.max(np.abs(np.linalg.norm(w, axis=1) - 1)))

    kg = TemporalKG([Quadruple(0, 0, 1, 0, 1), Quadruple(1, 1, 2, 1, 2), Quadruple(2, 0, 3, 2, 2)], [], [],
                    n_bins=3, n_entities=4, n_relations=2)
    train(kg, TrainConfig(model=kind, norm="l2", epochs=20, batch_size=2, learning_rate=0.1, dim=6), on_step=check)
    # 5 (triple, bin) incidences for HyTE, 3 triples for TransH, batches of 2
    assert len(worst) == 20 * (3 if kind == "hyte" else 2)
    assert max(worst) <= 1e-9


def test_same_seed_same_store():
    cfg = TrainConfig(epochs=30, seed=4, **TOY)
    a, ra = train(toy_kg(), cfg)
    b, rb = train(toy_kg(), cfg)
    for x, y in zip(a.blocks().values(), b.blocks().values()):
        assert np.array_equal(x, y)
    assert ra.to_jsonl() == rb.to_jsonl()
    c, _ = train(toy_kg(), TrainConfig(epochs=30, seed=5, **TOY))
    assert not np.array_equal(a.entity_vecs, c.entity_vecs)


@pytest.mark.parametrize("kind", ["transe", "transh", "hyte"])
@pytest.mark.parametrize("norm", ["l1", "l2"])
def test_toy_loss_decreases(kind, norm):
    _, report = train(toy_kg(), TrainConfig(model=kind, norm=norm, epochs=200, seed=0, **TOY))
    assert report.epochs[-1].mean_loss < report.epochs[0].mean_loss


def test_validation_early_stopping_and_checkpoints(tmp_path):
    rng = np.random.default_rng(0)
    facts = [Quadruple(int(h), 0, int(t), 0, 0) for h, t in rng.integers(0, 12, size=(40, 2))]
    kg = TemporalKG(facts[:30], facts[30:35], facts[35:], n_bins=1, n_entities=12, n_relations=1)
    cfg = TrainConfig(epochs=60, eval_every=2, patience=2, dim=4, learning_rate=1e-12, batch_size=8)
    _, report = train(kg, cfg, checkpoint_dir=tmp_path)
    # negligible learning rate: validation MR never improves after the first evaluation
    assert report.stopped_early
    assert report.best_epoch == 2
    assert len(report.epochs) == 6
    assert sorted(p.name for p in tmp_path.glob("*.json")) == ["epoch_00002.json", "epoch_00004.json",
                                                                 "epoch_00006.json"]
    store, _ = load_store(tmp_path / "epoch_00002.json")
    assert store.n_entities == 12
    lines = [json.loads(x) for x in report.to_jsonl().splitlines()]
    assert lines[1]["valid_mr"] is not None and "wall_time" not in lines[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    m = ModelKind("transe", "l2")
    store = init_embeddings((3, 1, 1), 4, 0, m)
    store.entity_vecs[0, 0] = np.inf
    with pytest.raises(NumericError, match="epoch 1"):
        train(toy_kg(), TrainConfig(model="transe", norm="l2", epochs=2, dim=4), store=store)


def test_parallel_mode_keeps_invariants():
    kg = TemporalKG([Quadruple(i % 5, i % 2, (i * 3) % 7, i % 3, i % 3) for i in range(40)], [], [],
                    n_bins=3, n_entities=7, n_relations=2)
    store, report = train(kg, TrainConfig(epochs=5, n_jobs=3, batch_size=4, dim=6, margin=1.0, learning_rate=0.05))
    assert store.is_finite()
    assert np.allclose(np.linalg.norm(store.time_normals, axis=1), 1.0, atol=1e-12)
    assert report.epochs[-1].n_pairs > 0
