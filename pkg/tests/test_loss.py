import math

import numpy as np
import pytest

from helpers import (
    affine_net,
    constant_net,
    constant_q_linear_u_instance,
    exact_observation,
    observation_at,
    small_random_nets,
    tiny_collocation,
)

from condmix.loss import (
    LossWeights,
    assemble_dirichlet,
    assemble_neumann,
    data_residual,
    dirichlet_bc_residual,
    divergence_residual,
    flux_bc_residual,
    loss_gradient,
    seminorm_penalty,
    tv_penalty,
)
from condmix.network import AdmissibleBounds, ParamSet, flatten_params
from condmix.problems import make_example, synthesize_observation
from condmix.tape import check_gradient

BOUNDS = AdmissibleBounds(0.5, 2.0)


# -- single terms -------------------------------------------------------------


def test_data_residual_zero_when_consistent():
    q_net = constant_net(2, [1.0])
    sigma_net = constant_net(2, [1.0, 0.5])
    obs = observation_at([[0.2, 0.3]], [[1.0, 0.5]])
    term = data_residual(q_net, sigma_net, obs, BOUNDS, vol=4.0)
    assert term.value == 0.0


def test_data_residual_hand_value_single_point():
    q_net = constant_net(2, [1.0])
    sigma_net = constant_net(2, [2.0, 0.0])
    obs = observation_at([[0.1, 0.1]], [[1.0, 0.0]])
    term = data_residual(q_net, sigma_net, obs, BOUNDS, vol=4.0)
    assert term.value == 4.0


def test_data_residual_hand_value_two_points():
    # squared residuals 1 and 3 -> 4 * (1 + 3) / 2 = 8
    q_net = constant_net(2, [1.0])
    sigma_net = constant_net(2, [1.0, 0.0])
    obs = observation_at(
        [[0.1, 0.1], [0.6, 0.6]], [[0.0, 0.0], [0.0, -math.sqrt(2.0)]]
    )
    term = data_residual(q_net, sigma_net, obs, BOUNDS, vol=4.0)
    assert term.value == pytest.approx(8.0, rel=1e-14)


def test_data_residual_applies_projection():
    # raw q = 5 clamps to c1 = 2
    q_net = constant_net(2, [5.0])
    sigma_net = constant_net(2, [2.0, 0.0])
    obs = observation_at([[0.5, 0.5]], [[1.0, 0.0]])
    term = data_residual(q_net, sigma_net, obs, BOUNDS, vol=1.0)
    assert term.value == 0.0


def test_data_residual_quadratic_homogeneity():
    for s in (2.0, 10.0):
        q_net = constant_net(2, [1.0])
        base_sigma = constant_net(2, [0.6, -0.4])
        scaled_sigma = constant_net(2, [s * 0.6, s * -0.4])
        obs = observation_at([[0.3, 0.8]], [[0.2, 0.1]])
        obs_scaled = observation_at([[0.3, 0.8]], [[s * 0.2, s * 0.1]])
        base = data_residual(q_net, base_sigma, obs, BOUNDS, vol=2.0)
        scaled = data_residual(q_net, scaled_sigma, obs_scaled, BOUNDS, vol=2.0)
        assert scaled.value == pytest.approx(s * s * base.value, rel=1e-13)


def test_data_residual_rejects_empty():
    q_net = constant_net(2, [1.0])
    sigma_net = constant_net(2, [1.0, 0.0])
    obs = observation_at(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        data_residual(q_net, sigma_net, obs, BOUNDS, vol=1.0)


def test_divergence_residual_values():
    pts = np.array([[0.2, 0.4], [0.7, 0.3]])
    sigma_const = constant_net(2, [1.0, 2.0])
    zero_f = lambda p: np.zeros(p.shape[0])
    assert divergence_residual(sigma_const, zero_f, pts, vol=4.0).value == 0.0

    one_f = lambda p: np.ones(p.shape[0])
    assert divergence_residual(sigma_const, one_f, pts, vol=4.0).value == 4.0

    # affine flux with Jacobian trace 2 against f = -2
    sigma_affine = affine_net(np.array([[1.0, 0.5], [0.25, 1.0]]))
    minus_two = lambda p: np.full(p.shape[0], -2.0)
    assert divergence_residual(sigma_affine, minus_two, pts, vol=4.0).value == 0.0


def test_flux_bc_residual_values():
    pts = np.array([[1.0, 0.5]])
    normals = np.array([[1.0, 0.0]])
    sigma_net = constant_net(2, [1.0, 0.0])

    g_match = lambda p, n: n @ np.array([1.0, 0.0])
    assert flux_bc_residual(sigma_net, g_match, pts, normals, area=4.0).value == 0.0

    g_half = lambda p, n: np.full(p.shape[0], 0.5)
    term = flux_bc_residual(sigma_net, g_half, pts, normals, area=4.0)
    assert term.value == 1.0

    with pytest.raises(ValueError):
        flux_bc_residual(sigma_net, g_half, pts, np.array([[2.0, 0.0]]), area=4.0)


def test_dirichlet_bc_residual_values():
    q_b = lambda p: np.full(p.shape[0], 2.0)
    obs = observation_at([[0.0, 0.5]], [[0.5, 0.25]])
    sigma_match = constant_net(2, [1.0, 0.5])
    assert dirichlet_bc_residual(sigma_match, q_b, obs, area=4.0).value == 0.0

    sigma_off = constant_net(2, [2.0, 0.5])  # residual vector (1, 0)
    assert dirichlet_bc_residual(sigma_off, q_b, obs, area=4.0).value == 4.0

    sigma_double = constant_net(2, [3.0, 0.5])  # residual vector (2, 0)
    assert dirichlet_bc_residual(sigma_double, q_b, obs, area=4.0).value == 16.0

    with pytest.raises(ValueError):
        dirichlet_bc_residual(sigma_match, q_b, None, area=4.0)


def test_seminorm_penalty_values():
    pts = np.array([[0.2, 0.2], [0.8, 0.5], [0.4, 0.9]])
    q_const = constant_net(2, [1.3])
    assert seminorm_penalty(q_const, pts, vol=4.0).value == 0.0

    q_affine = affine_net(np.array([[1.0, 1.0]]))
    assert seminorm_penalty(q_affine, pts, vol=4.0).value == 8.0

    q_affine_biased = affine_net(np.array([[1.0, 1.0]]), bias=[7.0])
    assert seminorm_penalty(q_affine_biased, pts, vol=4.0).value == 8.0


def test_tv_penalty_values():
    pts = np.array([[0.1, 0.9], [0.5, 0.5]])
    q_const = constant_net(2, [1.3])
    assert abs(tv_penalty(q_const, pts, vol=4.0, smoothing=1e-6).value) < 1e-12

    q_affine = affine_net(np.array([[1.0, 0.0]]))
    term = tv_penalty(q_affine, pts, vol=1.0, smoothing=1e-6)
    assert term.value == pytest.approx(1.0, abs=1e-6)

    slopes = (0.0, 0.5, 1.0, 2.0)
    values = [
        tv_penalty(affine_net(np.array([[s, 0.0]])), pts, vol=1.0).value for s in slopes
    ]
    assert all(b >= a for a, b in zip(values, values[1:]))

    with pytest.raises(ValueError):
        tv_penalty(q_affine, pts, vol=1.0, smoothing=0.0)


# -- assemblies ---------------------------------------------------------------


def _exact_nets(problem):
    grad = problem.grad_u_true(np.zeros((1, 2)))[0]
    q0 = float(problem.q_true(np.zeros((1, 2)))[0])
    q_net = constant_net(2, [q0])
    sigma_net = constant_net(2, q0 * grad)
    return q_net, sigma_net


def test_assemble_neumann_exact_zero():
    problem = constant_q_linear_u_instance()
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = _exact_nets(problem)
    weights = LossWeights(10.0, 10.0, 1e-5)
    breakdown = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    assert breakdown.total == 0.0
    grad = loss_gradient(breakdown)
    assert float(np.linalg.norm(grad)) == 0.0


def test_assemble_neumann_total_is_data_when_unweighted():
    problem = constant_q_linear_u_instance()
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = small_random_nets(2, seed=3)
    weights = LossWeights(0.0, 0.0, 0.0)
    breakdown = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    assert breakdown.total == breakdown.data
    assert breakdown.divergence > 0.0


def test_breakdown_identity_bit_exact():
    problem = make_example("neu1")
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = small_random_nets(2, seed=5)
    weights = LossWeights(10.0, 10.0, 1e-5, gamma_tv=0.01)
    b = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    recomputed = (
        b.data
        + weights.gamma_sigma * b.divergence
        + weights.gamma_b * b.boundary
        + weights.gamma_q * b.seminorm
        + weights.gamma_tv * b.tv
    )
    assert recomputed == b.total
    assert min(b.data, b.divergence, b.boundary, b.seminorm, b.tv) >= 0.0


def test_breakdown_identity_without_tv():
    problem = make_example("neu1")
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = small_random_nets(2, seed=6)
    weights = LossWeights(10.0, 10.0, 1e-5)
    b = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    recomputed = (
        b.data
        + weights.gamma_sigma * b.divergence
        + weights.gamma_b * b.boundary
        + weights.gamma_q * b.seminorm
        + weights.gamma_tv * b.tv
    )
    assert recomputed == b.total
    assert b.tv == 0.0


def test_assemble_dirichlet_exact_zero_and_variants_agree():
    problem = constant_q_linear_u_instance()
    problem.bc_kind = "dirichlet"
    problem.q_boundary = problem.q_true
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    obs_b = exact_observation(problem, colloc.boundary)
    q_net, sigma_net = _exact_nets(problem)
    weights = LossWeights(10.0, 10.0, 1e-5)
    b_flux = assemble_dirichlet(
        q_net, sigma_net, problem, colloc, obs, weights, variant="flux-bc", obs_boundary=obs_b
    )
    assert b_flux.total == 0.0
    assert float(np.linalg.norm(loss_gradient(b_flux))) == 0.0
    b_q = assemble_dirichlet(
        q_net, sigma_net, problem, colloc, obs, weights, variant="q-bc"
    )
    assert b_q.total == 0.0

    # with gamma_b = 0 the two variants coincide for any nets
    q_rand, s_rand = small_random_nets(2, seed=9)
    w0 = LossWeights(3.0, 0.0, 1e-4)
    v1 = assemble_dirichlet(
        q_rand, s_rand, problem, colloc, obs, w0, variant="flux-bc", obs_boundary=obs_b
    )
    v2 = assemble_dirichlet(q_rand, s_rand, problem, colloc, obs, w0, variant="q-bc")
    assert v1.total == v2.total


def test_assemble_dirichlet_qbc_boundary_term_zero_for_matching_net():
    problem = constant_q_linear_u_instance()
    problem.bc_kind = "dirichlet"
    problem.q_boundary = problem.q_true
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net = constant_net(2, [2.0])  # equals q_true on the boundary
    _, sigma_net = small_random_nets(2, seed=10)
    weights = LossWeights(1.0, 5.0, 1e-5)
    b = assemble_dirichlet(q_net, sigma_net, problem, colloc, obs, weights, variant="q-bc")
    assert b.boundary == 0.0


def test_assemble_rejects_missing_pieces():
    problem = constant_q_linear_u_instance()
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = small_random_nets(2, seed=11)
    weights = LossWeights(1.0, 1.0, 1e-5)

    no_flux = constant_q_linear_u_instance()
    no_flux.flux_bc = None
    with pytest.raises(ValueError):
        assemble_neumann(q_net, sigma_net, no_flux, colloc, obs, weights)

    diri = constant_q_linear_u_instance()
    diri.bc_kind = "dirichlet"
    with pytest.raises(ValueError):
        assemble_dirichlet(q_net, sigma_net, diri, colloc, obs, weights, variant="flux-bc")

    diri.q_boundary = diri.q_true
    with pytest.raises(ValueError):
        assemble_dirichlet(
            q_net, sigma_net, diri, colloc, obs, weights, variant="flux-bc", obs_boundary=None
        )


def test_partial_assembly_uses_separate_data_set():
    problem = make_example("neupartial2d")
    colloc = tiny_collocation(problem, n_r=16, n_b=8, n_data=12)
    obs = exact_observation(problem, colloc.data_points)
    q_net, sigma_net = small_random_nets(2, seed=12, q_mid=2.0)
    weights = LossWeights(10.0, 10.0, 1e-5)
    b = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    assert b.total > 0.0
    # observation on the wrong point set is rejected
    bad_obs = exact_observation(problem, colloc.interior)
    with pytest.raises(ValueError):
        assemble_neumann(q_net, sigma_net, problem, colloc, bad_obs, weights)


def test_projection_coupling_blocks_gradient_through_clamped_points():
    problem = constant_q_linear_u_instance()
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    # q constant far above c1: every point clamps, so dE_d/dtheta = 0
    q_net = constant_net(2, [10.0])
    _, sigma_net = small_random_nets(2, seed=13)
    term = data_residual(q_net, sigma_net, obs, problem.bounds, problem.domain.volume)
    grads = term.tape.backward(term.node)
    q_grad = term.q_net.gradient(grads)
    assert float(np.linalg.norm(q_grad)) == 0.0
    sigma_grad = term.sigma_net.gradient(grads)
    assert float(np.linalg.norm(sigma_grad)) > 0.0


def test_loss_gradient_scaling_linearity():
    problem = constant_q_linear_u_instance()
    colloc = tiny_collocation(problem)
    obs = exact_observation(problem, colloc.interior)
    q_net, sigma_net = small_random_nets(2, seed=14)
    weights = LossWeights(2.0, 3.0, 1e-4)
    b = assemble_neumann(q_net, sigma_net, problem, colloc, obs, weights)
    grad = loss_gradient(b)
    doubled = b.tape.record("scale", b.total_node, aux=2.0)
    adj = b.tape.backward(doubled)
    grad2 = np.concatenate([b.q_net.gradient(adj), b.sigma_net.gradient(adj)])
    assert np.array_equal(grad2, 2.0 * grad)


# -- finite-difference gradient checks ---------------------------------------


def _params_to_list(params: ParamSet):
    out = []
    for W, b in zip(params.weights, params.biases):
        out.extend([W, b])
    return out


def _list_to_params(spec, arrays):
    n = len(spec.layer_shapes())
    return ParamSet([arrays[2 * i] for i in range(n)], [arrays[2 * i + 1] for i in range(n)])


def _assembly_builder(problem, colloc, obs, weights, q_spec, s_spec, variant, obs_b=None):
    def build(arrays):
        n_q = 2 * len(q_spec.layer_shapes())
        q_params = _list_to_params(q_spec, arrays[:n_q])
        s_params = _list_to_params(s_spec, arrays[n_q:])
        if variant == "neumann":
            b = assemble_neumann(
                (q_spec, q_params), (s_spec, s_params), problem, colloc, obs, weights
            )
        else:
            b = assemble_dirichlet(
                (q_spec, q_params), (s_spec, s_params), problem, colloc, obs, weights,
                variant=variant, obs_boundary=obs_b,
            )
        leaf_ids = []
        for net in (b.q_net, b.sigma_net):
            for wid, bid in zip(net.weight_ids, net.bias_ids):
                leaf_ids.extend([wid, bid])
        return b.tape, b.total_node, leaf_ids

    return build


@pytest.mark.parametrize(
    "case",
    ["neumann", "dirichlet-flux", "dirichlet-qbc", "partial", "tv"],
)
def test_assembly_gradients_match_finite_differences(case):
    if case == "partial":
        problem = make_example("neupartial2d")
        q_mid = 2.0
    elif case.startswith("dirichlet"):
        problem = make_example("diri1")
        q_mid = 1.0
    else:
        problem = make_example("neu1")
        q_mid = 1.5
    colloc = tiny_collocation(problem, n_r=16, n_b=8, n_data=12)
    data_pts = colloc.data_points if problem.is_partial else colloc.interior
    obs = synthesize_observation(problem, data_pts, delta=0.05, seed=31)
    obs_b = synthesize_observation(problem, colloc.boundary, delta=0.05, seed=32)

    (q_spec, q_params), (s_spec, s_params) = small_random_nets(2, seed=15, q_mid=q_mid)
    weights = LossWeights(10.0, 10.0, 1e-3, gamma_tv=0.01 if case == "tv" else 0.0)
    variant = {
        "neumann": "neumann",
        "partial": "neumann",
        "tv": "neumann",
        "dirichlet-flux": "flux-bc",
        "dirichlet-qbc": "q-bc",
    }[case]
    build = _assembly_builder(problem, colloc, obs, weights, q_spec, s_spec, variant, obs_b)
    arrays = _params_to_list(q_params) + _params_to_list(s_params)
    n_params = sum(a.size for a in arrays)
    assert n_params <= 200
    err = check_gradient(build, arrays, h=1e-5)
    assert err < 1e-6
