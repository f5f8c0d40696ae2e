from __future__ import annotations

import numpy as np
import pytest

import gradcheck
from qexec import model as M
from qexec.circuit import default_node_registry, to_dag
from qexec.features import graph_sample
from qexec.qasm import parse_qasm
from qexec.synthetic import random_calibration

CFG = M.ModelConfig()
TINY = M.ModelConfig(gt_hidden=8, global_fc_dims=(6, 5), head_dims=(7, 4, 3, 1))


def bell_sample(cfg=CFG, seed=0):
    rng = np.random.default_rng(seed)
    c = parse_qasm("qreg q[2];\ncreg c[2];\nh q[0];\ncx q[0],q[1];\nmeasure q -> c;\n")
    gs = graph_sample(to_dag(c), random_calibration("b", 1), default_node_registry())
    x = gs.node_features / np.maximum(gs.node_features.max(axis=0), 1.0)
    return x, gs.edges, rng.uniform(0, 1, cfg.global_dim)


def test_config_dims():
    assert CFG.concat_dim == 242
    shapes = CFG.param_shapes()
    assert shapes["gt0.wq"] == (178, 178) and shapes["head0.w"] == (242, 128) and shapes["head3.w"] == (32, 1)
    with pytest.raises(M.ModelError):
        M.ModelConfig(head_dims=(4, 2))


def test_init_is_seeded_glorot():
    a, b = M.init_params(CFG), M.init_params(CFG)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    lim = np.sqrt(6 / (178 + 178))
    assert np.abs(a["gt0.wq"]).max() <= lim
    assert not a["head0.b"].any()


def test_zero_network_outputs_zero():
    params = M.zeros_like_params(M.init_params(CFG))
    x, e, g = bell_sample()
    assert M.forward(params, CFG, x, e, g) == 0.0


def test_singleton_attention_is_dense_layer():
    rng = np.random.default_rng(1)
    params = M.init_params(TINY, seed=3)
    params["gt0.bo"] = rng.normal(size=TINY.gt_hidden)
    x = rng.uniform(size=(1, TINY.node_dim))
    batch = M.pack([(x, np.zeros((0, 2), dtype=np.int64))], rng.uniform(size=(1, TINY.global_dim)))
    weights = M.attention_weights(params, TINY, batch)
    for w in weights:
        assert w[0, 0] == 1.0 and w[0, 1:].sum() == 0.0
    h, _ = M._attention_layer(x, batch, params["gt0.wq"], params["gt0.wk"], params["gt0.wv"], params["gt0.wo"],
                              params["gt0.bo"])
    expected = np.maximum(x @ params["gt0.wv"] @ params["gt0.wo"] + params["gt0.bo"], 0.0)
    np.testing.assert_allclose(h, expected, rtol=1e-12, atol=1e-14)


def test_attention_rows_are_distributions():
    rng = np.random.default_rng(2)
    batch = gradcheck.random_batch(CFG, rng, 3)
    for w in M.attention_weights(M.init_params(CFG), CFG, batch):
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(w[~batch.mask] == 0)


def _relabel(x, edges, perm):
    """Reorder nodes by ``perm`` (new position -> old node); edges follow, order kept."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return x[perm], inv[edges]


@pytest.mark.parametrize("seed", range(5))
def test_forward_invariant_under_relabelling(seed):
    rng = np.random.default_rng(seed)
    params = M.init_params(CFG, seed=seed)
    x, e, g = bell_sample(seed=seed)
    base = M.forward(params, CFG, x, e, g)
    perm = rng.permutation(len(x))
    x2, e2 = _relabel(x, e, perm)
    assert M.forward(params, CFG, x2, e2, g) == base


def test_batch_equals_individual_predictions():
    rng = np.random.default_rng(4)
    params = M.init_params(TINY)
    batch = gradcheck.random_batch(TINY, rng, 4)
    together = M.predict_batch(params, TINY, batch)
    offs = batch.offsets
    for b in range(4):
        sl = slice(offs[b], offs[b] + batch.counts[b])
        nbr = batch.nbr[sl] - offs[b]
        edges = [(int(nbr[i, j]), i) for i in range(len(nbr)) for j in (1, 2) if batch.mask[sl][i, j]]
        single = M.forward(params, TINY, batch.x[sl], np.array(edges, dtype=np.int64).reshape(-1, 2), batch.g[b])
        assert single == pytest.approx(together[b], rel=1e-12, abs=1e-12)


def test_perfect_predictions_zero_loss_and_grad():
    rng = np.random.default_rng(5)
    params = M.init_params(TINY)
    batch = gradcheck.random_batch(TINY, rng, 3)
    batch.y = M.predict_batch(params, TINY, batch)
    loss, grads = M.loss_and_grad(params, TINY, batch)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_single_linear_layer_closed_form():
    cfg = M.ModelConfig(gt_layers=1, gt_hidden=4, global_fc_dims=(3,), head_dims=(1,))
    rng = np.random.default_rng(6)
    params = M.init_params(cfg)
    batch = gradcheck.random_batch(cfg, rng, 1)
    _, caches = M._forward(params, cfg, batch)
    u = caches["head"][0][0][0]
    yhat = M.predict_batch(params, cfg, batch)[0]
    _, grads = M.loss_and_grad(params, cfg, batch)
    np.testing.assert_allclose(grads["head0.w"][:, 0], 2 * (yhat - batch.y[0]) * u, rtol=1e-12)
    assert grads["head0.b"][0] == pytest.approx(2 * (yhat - batch.y[0]), rel=1e-12)


def test_finite_differences_full_tiny_config():
    rng = np.random.default_rng(7)
    params = M.init_params(TINY, seed=9)
    batch = gradcheck.random_batch(TINY, rng, 2)
    errs = gradcheck.fd_relative_errors(params, TINY, batch, rng)
    assert set(errs) == set(params)
    assert max(errs.values()) < 1e-5, errs


def test_finite_differences_full_size_sampled():
    rng = np.random.default_rng(8)
    params = M.init_params(CFG, seed=2)
    batch = gradcheck.random_batch(CFG, rng, 2)
    errs = gradcheck.fd_relative_errors(params, CFG, batch, rng, per_tensor=4)
    assert max(errs.values()) < 1e-4, errs


def test_dimension_and_finiteness_errors():
    params = M.init_params(CFG)
    x, e, g = bell_sample()
    with pytest.raises(M.ModelError):
        M.forward(params, CFG, x[:, :100], e, g)
    with pytest.raises(M.ModelError):
        M.forward(params, CFG, x, e, g[:10])
    bad = x.copy()
    bad[0, 0] = np.nan
    with pytest.raises(M.ModelError):
        M.forward(params, CFG, bad, e, g)


def test_divergence_signalled():
    rng = np.random.default_rng(3)
    params = M.init_params(TINY)
    batch = gradcheck.random_batch(TINY, rng, 2)
    batch.y = np.array([np.inf, 0.0])
    with pytest.raises(M.ModelError):
        M.loss_and_grad(params, TINY, batch)


def test_neighbour_table():
    nbr, mask = M.neighbour_table(4, np.array([[0, 2], [1, 2], [2, 3]]))
    assert nbr.tolist() == [[0, 0, 0], [1, 1, 1], [2, 0, 1], [3, 2, 3]]
    assert mask.tolist() == [[True, False, False], [True, False, False], [True, True, True], [True, True, False]]
    with pytest.raises(M.ModelError):
        M.neighbour_table(3, np.array([[0, 2], [1, 2], [0, 2]]))


# -- weight container -----------------------------------------------------------------------


def test_save_load_bitwise(tmp_path):
    params = M.init_params(CFG, seed=11)
    path = tmp_path / "w.qxw"
    M.save_params(params, CFG, path, aux={"scaler/x": np.arange(3.0)}, meta={"note": "x"})
    w = M.load_params(path, CFG)
    assert w.config == CFG and list(w.params) == list(params)
    for k in params:
        assert w.params[k].tobytes() == params[k].tobytes()
    assert w.aux["scaler/x"].tolist() == [0.0, 1.0, 2.0] and w.meta == {"note": "x"}


def test_save_is_deterministic(tmp_path):
    params = M.init_params(TINY)
    M.save_params(params, TINY, tmp_path / "a")
    M.save_params(params, TINY, tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_config_mismatch(tmp_path):
    M.save_params(M.init_params(CFG), CFG, tmp_path / "w")
    with pytest.raises(M.ConfigMismatchError):
        M.load_params(tmp_path / "w", M.ModelConfig(node_dim=100))


def test_truncated_and_corrupt(tmp_path):
    path = tmp_path / "w"
    M.save_params(M.init_params(TINY), TINY, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(M.ChecksumError):
        M.load_params(path)
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 1
    path.write_bytes(bytes(flipped))
    with pytest.raises(M.ChecksumError):
        M.load_params(path)
    path.write_bytes(b"not a weight file at all, definitely not" * 2)
    with pytest.raises(M.ContainerError):
        M.load_params(path)


def test_version_mismatch(tmp_path):
    import hashlib
    import struct

    path = tmp_path / "w"
    M.save_params(M.init_params(TINY), TINY, path)
    body = bytearray(path.read_bytes()[:-32])
    struct.pack_into("<I", body, len(M.MAGIC), M.FORMAT_VERSION + 1)
    path.write_bytes(bytes(body) + hashlib.sha256(bytes(body)).digest())
    with pytest.raises(M.VersionError):
        M.load_params(path)


def test_shape_mismatch_rejected(tmp_path):
    params = M.init_params(TINY)
    params["head0.w"] = params["head0.w"][:, :2]
    with pytest.raises(M.ModelError):
        M.save_params(params, TINY, tmp_path / "w")
