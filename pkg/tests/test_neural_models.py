import math

import numpy as np
import pytest

from icubench.errors import SchemaError, TrainingError
from icubench.neural import (
    Adam,
    EmbeddingTable,
    TaskHead,
    bce_loss,
    build_model,
    embed,
    embedding_dims,
    grad_check,
    head_forward,
    mse_loss,
    train_model,
)
from icubench.neural.checkpoint import load_checkpoint, save_checkpoint, schema_hash
from icubench.neural.training import InstanceGroup
from icubench.schema import Task, apply_vocabs, canonical_schema

VOCABS = {"A": 4, "B": 3, "C": 5, "D": 4, "E": 3, "F": 3, "G": 6}


def small_batch(rng, task, T=6, B=3, n_num=13):
    num = rng.normal(size=(B, T, n_num))
    cat = np.stack([rng.integers(0, size, size=(B, T)) for size in VOCABS.values()], axis=-1)
    if task == Task.PHENOTYPING:
        labels = (rng.random((B, 25)) < 0.4).astype(float)
    elif task == Task.LOS:
        labels = rng.uniform(0.0, 3.0, size=B)
    else:
        labels = (rng.random(B) < 0.5).astype(float)
        labels[0] = 1.0
        labels[1] = 0.0
    return num, cat, labels


class TestEmbedding:
    def test_identity_equals_one_hot(self):
        emb = EmbeddingTable.identity({"A": 4, "B": 3})
        out = embed([2, 0], emb)
        expected = np.concatenate([np.eye(4)[2], np.eye(3)[0]])
        assert np.array_equal(out, expected)

    def test_zero_tables_give_zero_vector(self):
        emb = EmbeddingTable({"A": np.zeros((4, 2)), "B": np.zeros((3, 2))})
        assert np.array_equal(embed([1, 2], emb), np.zeros(4))

    def test_unselected_rows_get_zero_gradient(self):
        rng = np.random.default_rng(0)
        emb = EmbeddingTable.random({"A": 4}, {"A": 3}, rng)
        idx = np.array([[0], [2]])
        dout = rng.normal(size=(2, 3))
        grads = emb.backward(idx, dout)
        assert np.all(grads["A"][1] == 0.0) and np.all(grads["A"][3] == 0.0)
        assert np.any(grads["A"][0] != 0.0)

    def test_out_of_range_index_faults(self):
        emb = EmbeddingTable.identity({"A": 4})
        with pytest.raises(IndexError):
            emb.forward(np.array([[4]]))

    def test_default_dims_heuristic(self):
        assert embedding_dims({"A": 3, "B": 99, "C": 200}) == {"A": 2, "B": 50, "C": 50}


class TestLosses:
    def test_bce_half_prediction_is_ln2(self):
        loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_bce_near_zero_when_correct(self):
        loss, _ = bce_loss(np.array([1.0 - 1e-12, 1e-12]), np.array([1.0, 0.0]))
        assert loss < 1e-9

    def test_bce_rejects_nonbinary_labels(self):
        with pytest.raises(ValueError):
            bce_loss(np.array([0.5]), np.array([0.3]))

    def test_mse_zero_when_exact(self):
        loss, grad = mse_loss(np.array([1.5, 2.0]), np.array([1.5, 2.0]))
        assert loss == 0.0 and np.all(grad == 0.0)


class TestHeads:
    def test_zero_head_is_half(self):
        head = TaskHead(W=np.zeros((1, 6)), b=np.zeros(1))
        assert head_forward(np.ones(6), head, Task.MORTALITY) == 0.5

    def test_los_head_clamps_negative(self):
        head = TaskHead(W=np.full((1, 4), -0.5), b=np.zeros(1))
        assert head_forward(np.ones(4), head, Task.LOS) == 0.0

    def test_phenotyping_zero_head_outputs_25_halves(self):
        head = TaskHead(W=np.zeros((25, 6)), b=np.zeros(25))
        out = head_forward(np.ones((2, 6)), head, Task.PHENOTYPING)
        assert out.shape == (2, 25) and np.all(out == 0.5)

    def test_width_mismatch(self):
        head = TaskHead(W=np.zeros((1, 6)), b=np.zeros(1))
        with pytest.raises(ValueError):
            head_forward(np.ones(5), head, Task.MORTALITY)

    def test_sigmoid_outputs_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(0)
        head = TaskHead(W=rng.normal(size=(1, 6)), b=rng.normal(size=1))
        out = head_forward(rng.normal(size=(100, 6)) * 5, head, Task.DECOMPENSATION)
        assert np.all(out > 0.0) and np.all(out < 1.0)


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = {"w": np.array([1.0, -2.0])}
        opt = Adam(params)
        opt.step({"w": np.zeros(2)})
        assert np.array_equal(params["w"], [1.0, -2.0])

    def test_first_step_magnitude(self):
        params = {"w": np.array([0.0])}
        opt = Adam(params, step_size=1e-3)
        opt.step({"w": np.array([1.0])})
        assert params["w"][0] == pytest.approx(-1e-3, rel=1e-6)

    def test_constant_gradient_moves_against_sign(self):
        params = {"w": np.array([0.0, 0.0])}
        opt = Adam(params)
        for _ in range(50):
            opt.step({"w": np.array([1.0, -2.0])})
        assert params["w"][0] < 0.0 < params["w"][1]

    def test_nonfinite_gradient_raises(self):
        opt = Adam({"w": np.zeros(1)})
        with pytest.raises(TrainingError, match="batch 3"):
            opt.step({"w": np.array([np.nan])}, batch_id="batch 3")


class TestGradCheck:
    @pytest.mark.parametrize("task", [Task.MORTALITY, Task.LOS, Task.PHENOTYPING, Task.DECOMPENSATION])
    def test_linear_model_tight(self, task):
        # near-linear loss: a wider step kills the round-off term, and the
        # truncation term stays negligible, so 1e-7 relative is attainable
        rng = np.random.default_rng(4)
        model = build_model("lr", task, rng, vocab_sizes=VOCABS)
        result = grad_check(model, small_batch(rng, task), eps=3e-4, n_coords=150, rng=np.random.default_rng(0))
        assert result.max_rel_error < 1e-7

    def test_ann_model(self):
        rng = np.random.default_rng(5)
        model = build_model("ann", Task.MORTALITY, rng, vocab_sizes=VOCABS, ann_hidden=16)
        result = grad_check(model, small_batch(rng, Task.MORTALITY), eps=1e-4, n_coords=200,
                            rng=np.random.default_rng(0))
        assert result.max_rel_error < 1e-6

    def test_bilstm_model(self):
        rng = np.random.default_rng(6)
        model = build_model("bilstm", Task.MORTALITY, rng, vocab_sizes=VOCABS, hidden=8)
        result = grad_check(model, small_batch(rng, Task.MORTALITY), n_coords=220, rng=np.random.default_rng(0))
        assert result.max_rel_error < 1e-4
        assert result.n_checked >= 200

    def test_los_kinks_are_reported_not_failed(self):
        rng = np.random.default_rng(7)
        model = build_model("lr", Task.LOS, rng, vocab_sizes=None, use_numeric=True)
        # park the head exactly on the kink for one instance
        model.params["head/W"][:] = 0.0
        model.params["head/b"][:] = 0.0
        num, _, labels = small_batch(rng, Task.LOS)
        result = grad_check(model, (num, None, labels), n_coords=40, rng=np.random.default_rng(0))
        assert result.skipped_kinks  # zero pre-activation flips sign under perturbation


class TestEncodingEquivalence:
    def test_ohe_equals_identity_frozen_embedding_bitwise(self):
        task = Task.MORTALITY
        num, cat, labels = small_batch(np.random.default_rng(8), task)
        models = []
        for encoding, init in (("ohe", "random"), ("embedding", "identity")):
            rng = np.random.default_rng(99)
            models.append(
                build_model("bilstm", task, rng, vocab_sizes=VOCABS, encoding=encoding,
                            embed_init=init, embed_frozen=True, hidden=6)
            )
        a, b = models
        group = InstanceGroup(indices=np.arange(len(labels)), num=num, cat=cat, labels=labels)
        train_model(a, [group], epochs=3, batch_size=2, rng=np.random.default_rng(1))
        train_model(b, [group], epochs=3, batch_size=2, rng=np.random.default_rng(1))
        assert np.array_equal(a.predict(num, cat), b.predict(num, cat))

    def test_categorical_only_width(self):
        model = build_model("lr", Task.MORTALITY, np.random.default_rng(0),
                            use_numeric=False, vocab_sizes=VOCABS)
        expected = sum(embedding_dims(VOCABS).values())
        assert model.input_width == expected


class TestDeterminism:
    def test_same_seed_same_trajectory(self):
        task = Task.DECOMPENSATION
        num, cat, labels = small_batch(np.random.default_rng(2), task, B=8)
        group = InstanceGroup(indices=np.arange(8), num=num, cat=cat, labels=labels)
        snapshots = []
        for _ in range(2):
            model = build_model("bilstm", task, np.random.default_rng(3), vocab_sizes=VOCABS, hidden=5)
            train_model(model, [group], epochs=2, batch_size=4, rng=np.random.default_rng(4))
            snapshots.append({k: v.copy() for k, v in model.params.items()})
        for key in snapshots[0]:
            assert np.array_equal(snapshots[0][key], snapshots[1][key])


class TestCheckpoint:
    def test_roundtrip_and_hash_guard(self, tmp_path):
        rng = np.random.default_rng(0)
        model = build_model("ann", Task.LOS, rng, vocab_sizes=VOCABS, ann_hidden=8)
        schema = apply_vocabs(
            canonical_schema(),
            {s.name: ("unknown", "a") for s in canonical_schema() if s.kind == "categorical"},
        )
        digest = schema_hash(schema)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model.params, digest, {"kind": "ann", "task": "los"})
        meta, params = load_checkpoint(path, digest)
        assert meta["kind"] == "ann"
        for key, value in model.params.items():
            assert np.array_equal(params[key], value)
        with pytest.raises(SchemaError):
            load_checkpoint(path, b"\x00" * 32)
