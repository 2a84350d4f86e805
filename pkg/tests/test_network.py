import math

import numpy as np
import pytest

from condmix.network import (
    AdmissibleBounds,
    MlpSpec,
    ParamSet,
    TapeNet,
    flatten_params,
    init_params,
    load_params,
    mlp_forward,
    mlp_forward_batch,
    mlp_forward_batch_with_jacobian,
    mlp_forward_with_jacobian,
    parallelize,
    project_admissible,
    save_params,
    unflatten_params,
)
from condmix.tape import Tape


def _zero_params(spec):
    return ParamSet(
        [np.zeros(s) for s in spec.layer_shapes()],
        [np.zeros(s[0]) for s in spec.layer_shapes()],
    )


def test_forward_zero_net_is_zero():
    spec = MlpSpec(2, (4, 3), 1)
    params = _zero_params(spec)
    assert mlp_forward(spec, params, np.array([0.4, -0.9])) == np.array([0.0])


def test_forward_affine_identity():
    spec = MlpSpec(2, (), 2)
    params = ParamSet([np.eye(2)], [np.zeros(2)])
    out = mlp_forward(spec, params, np.array([0.3, 0.7]))
    assert np.array_equal(out, np.array([0.3, 0.7]))


def test_forward_scalar_tanh_chain():
    # depth 2 scalar: out = 1 * tanh(1 * x + 0) + 0
    spec = MlpSpec(1, (1,), 1)
    params = ParamSet([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    out = mlp_forward(spec, params, np.array([1.0]))
    assert out[0] == pytest.approx(math.tanh(1.0), abs=1e-15)
    assert out[0] == pytest.approx(0.7615941559, abs=1e-9)


def test_jacobian_affine_is_weight_matrix():
    A = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    spec = MlpSpec(3, (), 2)
    params = ParamSet([A], [np.array([0.3, -0.2])])
    _, jac = mlp_forward_with_jacobian(spec, params, np.array([0.1, 0.2, 0.3]))
    assert np.array_equal(jac, A)


def test_jacobian_scalar_chain_at_zero():
    spec = MlpSpec(1, (1,), 1)
    params = ParamSet([np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    _, jac = mlp_forward_with_jacobian(spec, params, np.array([0.0]))
    assert jac[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_jacobian_matches_finite_differences():
    spec = MlpSpec(3, (8, 8, 8), 2)
    params = init_params(spec, 11)
    rng = np.random.Generator(np.random.Philox(5))
    x = rng.uniform(0.1, 0.9, size=3)
    _, jac = mlp_forward_with_jacobian(spec, params, x)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (mlp_forward(spec, params, x + e) - mlp_forward(spec, params, x - e)) / (2 * h)
        assert np.max(np.abs(jac[:, i] - fd)) / max(1.0, np.max(np.abs(jac[:, i]))) < 1e-6


def test_batch_matches_single_and_value_channel():
    spec = MlpSpec(2, (7, 5), 2)
    params = init_params(spec, 3)
    rng = np.random.Generator(np.random.Philox(9))
    pts = rng.uniform(-1, 1, size=(11, 2))
    batch = mlp_forward_batch(spec, params, pts)
    batch_j, jac = mlp_forward_batch_with_jacobian(spec, params, pts)
    assert np.array_equal(batch, batch_j)
    for k in range(pts.shape[0]):
        # single-point and batched evaluation may differ by rounding only
        single = mlp_forward(spec, params, pts[k])
        assert np.allclose(single, batch[k], rtol=0, atol=1e-14)
        _, jac_k = mlp_forward_with_jacobian(spec, params, pts[k])
        assert np.allclose(jac_k, jac[k], rtol=0, atol=1e-14)


def test_tape_forward_matches_plain():
    spec = MlpSpec(2, (6, 4), 2)
    params = init_params(spec, 21)
    rng = np.random.Generator(np.random.Philox(2))
    pts = rng.uniform(-1, 1, size=(9, 2))
    tape = Tape()
    net = TapeNet(tape, spec, params)
    ev = net.forward(pts, jacobian=True)
    # the tape uses BLAS matmuls, the plain path a sequential-contraction
    # kernel; they agree up to rounding
    plain = mlp_forward_batch(spec, params, pts)
    assert np.allclose(tape.value(ev.value).T, plain, rtol=0, atol=1e-13)
    _, jac = mlp_forward_batch_with_jacobian(spec, params, pts)
    for i in range(2):
        assert np.allclose(tape.value(ev.input_grad[i]).T, jac[:, :, i], rtol=0, atol=1e-13)


def test_parallelize_widths_and_exactness():
    spec1 = MlpSpec(2, (5, 4), 1)
    spec2 = MlpSpec(2, (3, 6), 2)
    p1 = init_params(spec1, 1)
    p2 = init_params(spec2, 2)
    spec, params = parallelize((spec1, p1), (spec2, p2))
    assert spec.layer_widths == (8, 10)
    assert spec.output_dim == 3
    rng = np.random.Generator(np.random.Philox(4))
    pts = rng.uniform(-1, 1, size=(100, 2))
    combined = mlp_forward_batch(spec, params, pts)
    out1 = mlp_forward_batch(spec1, p1, pts)
    out2 = mlp_forward_batch(spec2, p2, pts)
    assert np.array_equal(combined[:, :1], out1)
    assert np.array_equal(combined[:, 1:], out2)


def test_parallelize_equal_widths_doubles_width():
    spec1 = MlpSpec(2, (6, 6), 1)
    spec, _ = parallelize((spec1, init_params(spec1, 0)), (spec1, init_params(spec1, 1)))
    assert spec.width == 2 * spec1.width == 12


def test_parallelize_with_zero_net_keeps_first_block():
    spec1 = MlpSpec(2, (4,), 1)
    p1 = init_params(spec1, 8)
    zero = _zero_params(spec1)
    spec, params = parallelize((spec1, p1), (spec1, zero))
    pts = np.array([[0.2, -0.4], [0.9, 0.1]])
    combined = mlp_forward_batch(spec, params, pts)
    assert np.array_equal(combined[:, :1], mlp_forward_batch(spec1, p1, pts))
    assert np.array_equal(combined[:, 1:], np.zeros((2, 1)))


def test_parallelize_rejects_mismatch():
    a = MlpSpec(2, (4,), 1)
    b = MlpSpec(2, (4, 4), 1)
    c = MlpSpec(3, (4,), 1)
    with pytest.raises(ValueError):
        parallelize((a, init_params(a, 0)), (b, init_params(b, 0)))
    with pytest.raises(ValueError):
        parallelize((a, init_params(a, 0)), (c, init_params(c, 0)))


def test_project_admissible_cases():
    bounds = AdmissibleBounds(1.0, 2.0)
    v, m = project_admissible(1.5, bounds)
    assert (v, m) == (1.5, 1.0)
    v, m = project_admissible(0.5, bounds)
    assert (v, m) == (1.0, 0.0)
    v, m = project_admissible(3.0, bounds)
    assert (v, m) == (2.0, 0.0)
    with pytest.raises(ValueError):
        project_admissible(np.array([1.0, np.nan]), bounds)


def test_projection_stability_and_idempotence():
    bounds = AdmissibleBounds(0.5, 2.5)
    rng = np.random.Generator(np.random.Philox(12))
    w = rng.normal(0.0, 3.0, size=1000)
    clamped, _ = project_admissible(w, bounds)
    assert clamped.min() >= bounds.c0 and clamped.max() <= bounds.c1
    again, _ = project_admissible(clamped, bounds)
    assert np.array_equal(clamped, again)


def test_projection_nonexpansive():
    bounds = AdmissibleBounds(0.5, 2.5)
    rng = np.random.Generator(np.random.Philox(13))
    w = rng.normal(0.0, 3.0, size=2000)
    v = rng.uniform(bounds.c0, bounds.c1, size=2000)
    clamped, _ = project_admissible(w, bounds)
    assert np.all(np.abs(clamped - v) <= np.abs(w - v) + 1e-15)


def test_init_params_deterministic_and_bounded():
    spec = MlpSpec(3, (10, 10), 2)
    a = init_params(spec, 42)
    b = init_params(spec, 42)
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    for (rows, cols), W in zip(spec.layer_shapes(), a.weights):
        lim = math.sqrt(6.0 / (rows + cols))
        assert np.max(np.abs(W)) <= lim
    assert all(np.array_equal(bb, np.zeros_like(bb)) for bb in a.biases)
    with pytest.raises(ValueError):
        init_params(spec, 0, scheme="he-normal")


def test_flatten_roundtrip_and_serialization(tmp_path):
    spec = MlpSpec(2, (5, 3), 2, weight_bound=10.0)
    params = init_params(spec, 77)
    vec = flatten_params(params)
    back = unflatten_params(spec, vec)
    for W1, W2 in zip(params.weights, back.weights):
        assert np.array_equal(W1, W2)
    path = tmp_path / "net.json"
    save_params(path, spec, params)
    spec2, params2 = load_params(path)
    assert spec2 == spec
    assert np.array_equal(flatten_params(params2), vec)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        MlpSpec(0, (4,), 1)
    with pytest.raises(ValueError):
        MlpSpec(2, (0,), 1)
    with pytest.raises(ValueError):
        AdmissibleBounds(0.0, 1.0)
    with pytest.raises(ValueError):
        AdmissibleBounds(2.0, 1.0)
    spec = MlpSpec(2, (4,), 1)
    with pytest.raises(ValueError):
        mlp_forward(spec, init_params(spec, 0), np.array([1.0, 2.0, 3.0]))
