"""Empirical loss components and their assemblies as differentiable tapes.

Every term is a Monte Carlo mean over a fixed point set, scaled by the
measure of its integration region, and recorded on a shared tape so one
reverse sweep yields the gradient with respect to the parameters of both
networks.  The conductivity enters the data term through the admissible-box
projection, whose sub-derivative is the interior mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CollocationSet
from .network import AdmissibleBounds, MlpSpec, ParamSet, TapeNet, project_admissible
from .problems import ObservationField, ProblemInstance
from .tape import Tape

NetPair = tuple[MlpSpec, ParamSet]


@dataclass(frozen=True)
class LossWeights:
    """Penalty weights for the divergence, boundary, seminorm and TV terms."""

    gamma_sigma: float
    gamma_b: float
    gamma_q: float
    gamma_tv: float = 0.0

    def __post_init__(self):
        for name in ("gamma_sigma", "gamma_b", "gamma_q", "gamma_tv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class LossBreakdown:
    """Scalar values of the loss components plus the tape they live on.

    ``total`` equals data + gamma_sigma * divergence + gamma_b * boundary
    + gamma_q * seminorm + gamma_tv * tv, accumulated left to right with the
    identical float operations used to build the total node.
    """

    data: float
    divergence: float
    boundary: float
    seminorm: float
    tv: float
    total: float
    tape: Tape
    total_node: int
    q_net: TapeNet
    sigma_net: TapeNet


@dataclass
class TermResult:
    """A single loss term evaluated on its own tape (used by unit checks)."""

    tape: Tape
    node: int
    value: float
    q_net: TapeNet | None = None
    sigma_net: TapeNet | None = None


# -- on-tape building blocks -------------------------------------------------


def _ones_row(tape: Tape, d: int) -> int:
    return tape.constant(np.ones((1, d)))


def _selector_row(tape: Tape, i: int, d: int) -> int:
    row = np.zeros((1, d))
    row[0, i] = 1.0
    return tape.constant(row)


def _mc_scaled(tape: Tape, per_point: int, measure: float, n: int) -> int:
    return tape.record("scale", tape.record("sum", per_point), aux=measure / n)


def _project_node(tape: Tape, value_node: int, bounds: AdmissibleBounds) -> int:
    """Record the admissible projection of a scalar field node.

    The clamp is expressed as mask * v + offset with the mask and offset
    taken from the current forward values, so the reverse pass sees exactly
    the interior-mask sub-derivative.
    """
    v = tape.value(value_node)
    clamped, mask = project_admissible(v, bounds)
    offset = clamped - mask * v
    masked = tape.record("mul", value_node, tape.constant(mask))
    return tape.record("add", masked, tape.constant(offset))


def _sq_norm_rows(tape: Tape, node: int, d: int) -> int:
    """Per-point squared Euclidean norm of a (d, n) node -> (1, n) node."""
    sq = tape.record("square", node)
    return tape.record("matvec", _ones_row(tape, d), sq)


def _data_term(tape, q_value, sigma_value, grad_z, bounds, measure) -> int:
    n = grad_z.shape[0]
    if n == 0:
        raise ValueError("empty point set")
    d = grad_z.shape[1]
    projected = _project_node(tape, q_value, bounds)
    target = tape.record("mul", tape.constant(grad_z.T.copy()), projected)
    residual = tape.record("sub", sigma_value, target)
    per_point = _sq_norm_rows(tape, residual, d)
    return _mc_scaled(tape, per_point, measure, n)


def _check_sigma_spec(spec: MlpSpec) -> None:
    if spec.output_dim != spec.input_dim:
        raise ValueError(
            f"flux network must map R^{spec.input_dim} -> R^{spec.input_dim}, "
            f"got output dimension {spec.output_dim}"
        )


def _divergence_term(tape, sigma_grad_nodes, f_values, measure) -> int:
    n = f_values.shape[0]
    if n == 0:
        raise ValueError("empty point set")
    d = len(sigma_grad_nodes)
    div = None
    for i in range(d):
        comp = tape.record("matvec", _selector_row(tape, i, d), sigma_grad_nodes[i])
        div = comp if div is None else tape.record("add", div, comp)
    residual = tape.record("add", div, tape.constant(f_values.reshape(1, -1)))
    per_point = tape.record("square", residual)
    return _mc_scaled(tape, per_point, measure, n)


def _flux_term(tape, sigma_value, g_values, normals, measure) -> int:
    n = g_values.shape[0]
    if n == 0:
        raise ValueError("empty point set")
    d = normals.shape[1]
    prod = tape.record("mul", sigma_value, tape.constant(normals.T.copy()))
    sigma_n = tape.record("matvec", _ones_row(tape, d), prod)
    residual = tape.record("sub", sigma_n, tape.constant(g_values.reshape(1, -1)))
    per_point = tape.record("square", residual)
    return _mc_scaled(tape, per_point, measure, n)


def _dirichlet_flux_term(tape, sigma_value, q_bnd, grad_z, measure) -> int:
    n = grad_z.shape[0]
    if n == 0:
        raise ValueError("empty point set")
    d = grad_z.shape[1]
    target = tape.constant((q_bnd[:, None] * grad_z).T.copy())
    residual = tape.record("sub", sigma_value, target)
    per_point = _sq_norm_rows(tape, residual, d)
    return _mc_scaled(tape, per_point, measure, n)


def _qvalue_boundary_term(tape, q_value, q_bnd, measure) -> int:
    n = q_bnd.shape[0]
    if n == 0:
        raise ValueError("empty point set")
    residual = tape.record("sub", q_value, tape.constant(q_bnd.reshape(1, -1)))
    per_point = tape.record("square", residual)
    return _mc_scaled(tape, per_point, measure, n)


def _seminorm_term(tape, q_grad_nodes, n, measure):
    if n == 0:
        raise ValueError("empty point set")
    sq_norm = None
    for g in q_grad_nodes:
        sq = tape.record("square", g)
        sq_norm = sq if sq_norm is None else tape.record("add", sq_norm, sq)
    return _mc_scaled(tape, sq_norm, measure, n), sq_norm


def _tv_term(tape, grad_sq_norm_node, n, measure, eps) -> int:
    if eps <= 0:
        raise ValueError("tv smoothing must be positive")
    smoothed = tape.record("sqrt_smoothed", grad_sq_norm_node, aux=eps)
    raw = _mc_scaled(tape, smoothed, measure, n)
    return tape.record("sub", raw, tape.constant(np.asarray(measure * eps)))


# -- public single-term operations --------------------------------------------


def data_residual(
    q_net: NetPair, sigma_net: NetPair, obs: ObservationField,
    bounds: AdmissibleBounds, vol: float,
) -> TermResult:
    """Data-fit term: mean of ||sigma - P(q) grad z||^2 over the data points, times vol."""
    tape = Tape()
    qn = TapeNet(tape, *q_net)
    sn = TapeNet(tape, *sigma_net)
    node = _data_term(
        tape, qn.forward(obs.points).value, sn.forward(obs.points).value,
        obs.grad_z, bounds, vol,
    )
    return TermResult(tape, node, float(tape.value(node)), qn, sn)


def divergence_residual(sigma_net: NetPair, f, points, vol: float) -> TermResult:
    """Interior PDE residual: mean of (div sigma + f)^2, times vol."""
    _check_sigma_spec(sigma_net[0])
    tape = Tape()
    sn = TapeNet(tape, *sigma_net)
    ev = sn.forward(points, jacobian=True)
    node = _divergence_term(tape, ev.input_grad, np.asarray(f(points)), vol)
    return TermResult(tape, node, float(tape.value(node)), sigma_net=sn)


def flux_bc_residual(sigma_net: NetPair, g, points, normals, area: float) -> TermResult:
    """Neumann boundary residual: mean of (sigma . n - g)^2, times area."""
    normals = np.asarray(normals, dtype=np.float64)
    norms = np.sqrt(np.sum(normals**2, axis=1))
    if not np.allclose(norms, 1.0, atol=1e-12):
        raise ValueError("normals must be unit vectors")
    tape = Tape()
    sn = TapeNet(tape, *sigma_net)
    ev = sn.forward(points)
    node = _flux_term(tape, ev.value, np.asarray(g(points, normals)), normals, area)
    return TermResult(tape, node, float(tape.value(node)), sigma_net=sn)


def dirichlet_bc_residual(
    sigma_net: NetPair, q_boundary, obs_boundary: ObservationField, area: float
) -> TermResult:
    """Dirichlet boundary residual: mean of ||sigma - q grad z||^2 on the boundary."""
    if obs_boundary is None:
        raise ValueError("missing boundary observation")
    tape = Tape()
    sn = TapeNet(tape, *sigma_net)
    ev = sn.forward(obs_boundary.points)
    node = _dirichlet_flux_term(
        tape, ev.value, np.asarray(q_boundary(obs_boundary.points)),
        obs_boundary.grad_z, area,
    )
    return TermResult(tape, node, float(tape.value(node)), sigma_net=sn)


def seminorm_penalty(q_net: NetPair, points, vol: float) -> TermResult:
    """H1-seminorm penalty: mean of ||grad q||^2 over interior points, times vol."""
    if q_net[0].output_dim != 1:
        raise ValueError("seminorm penalty expects a scalar network")
    tape = Tape()
    qn = TapeNet(tape, *q_net)
    ev = qn.forward(points, jacobian=True)
    node, _ = _seminorm_term(tape, ev.input_grad, points.shape[0], vol)
    return TermResult(tape, node, float(tape.value(node)), q_net=qn)


def tv_penalty(q_net: NetPair, points, vol: float, smoothing: float = 1e-6) -> TermResult:
    """Smoothed isotropic total variation: mean of sqrt(||grad q||^2 + eps^2) - eps."""
    tape = Tape()
    qn = TapeNet(tape, *q_net)
    ev = qn.forward(points, jacobian=True)
    _, sq_norm = _seminorm_term(tape, ev.input_grad, points.shape[0], vol)
    node = _tv_term(tape, sq_norm, points.shape[0], vol, smoothing)
    return TermResult(tape, node, float(tape.value(node)), q_net=qn)


# -- assemblies ----------------------------------------------------------------


def _chain_total(tape, data, parts):
    """total = data + sum_i gamma_i * part_i, accumulated left to right."""
    total = data
    for gamma, node in parts:
        total = tape.record("add", total, tape.record("scale", node, aux=gamma))
    return total


def _check_obs(obs: ObservationField, points: np.ndarray, label: str) -> None:
    if obs is None:
        raise ValueError(f"missing {label} observation")
    if obs.points.shape != points.shape or not np.array_equal(obs.points, points):
        raise ValueError(f"{label} observation points do not match the collocation set")


def assemble_neumann(
    q_net: NetPair,
    sigma_net: NetPair,
    problem: ProblemInstance,
    colloc: CollocationSet,
    obs: ObservationField,
    weights: LossWeights,
    tv_epsilon: float = 1e-6,
) -> LossBreakdown:
    """Full Neumann loss; with a partial-data problem the data term runs on
    the separate omega point set while the PDE terms stay on the full domain."""
    if problem.flux_bc is None:
        raise ValueError("missing flux data g for the Neumann assembly")
    _check_sigma_spec(sigma_net[0])
    tape = Tape()
    qn = TapeNet(tape, *q_net)
    sn = TapeNet(tape, *sigma_net)

    interior = colloc.interior
    if problem.is_partial and colloc.data_points is None:
        raise ValueError("partial-data problem needs a data point set")
    if problem.is_partial:
        data_measure = problem.domain.volume - problem.data_region.volume
    else:
        data_measure = problem.domain.volume
    data_pts = colloc.data_points if colloc.data_points is not None else interior
    _check_obs(obs, data_pts, "interior")

    q_int = qn.forward(interior, jacobian=True)
    s_int = sn.forward(interior, jacobian=True)
    if data_pts is interior:
        q_dat, s_dat = q_int, s_int
    else:
        q_dat = qn.forward(data_pts)
        s_dat = sn.forward(data_pts)
    s_bnd = sn.forward(colloc.boundary)

    vol = problem.domain.volume
    area = problem.domain.boundary_area
    n_int = interior.shape[0]

    data_node = _data_term(tape, q_dat.value, s_dat.value, obs.grad_z, problem.bounds, data_measure)
    div_node = _divergence_term(tape, s_int.input_grad, problem.source(interior), vol)
    g_vals = np.asarray(problem.flux_bc(colloc.boundary, colloc.normals))
    bnd_node = _flux_term(tape, s_bnd.value, g_vals, colloc.normals, area)
    semi_node, sq_norm = _seminorm_term(tape, q_int.input_grad, n_int, vol)

    parts = [(weights.gamma_sigma, div_node), (weights.gamma_b, bnd_node), (weights.gamma_q, semi_node)]
    tv_value = 0.0
    if weights.gamma_tv > 0.0:
        tv_node = _tv_term(tape, sq_norm, n_int, vol, tv_epsilon)
        parts.append((weights.gamma_tv, tv_node))
        tv_value = float(tape.value(tv_node))
    total_node = _chain_total(tape, data_node, parts)

    return LossBreakdown(
        data=float(tape.value(data_node)),
        divergence=float(tape.value(div_node)),
        boundary=float(tape.value(bnd_node)),
        seminorm=float(tape.value(semi_node)),
        tv=tv_value,
        total=float(tape.value(total_node)),
        tape=tape,
        total_node=total_node,
        q_net=qn,
        sigma_net=sn,
    )


def assemble_dirichlet(
    q_net: NetPair,
    sigma_net: NetPair,
    problem: ProblemInstance,
    colloc: CollocationSet,
    obs: ObservationField,
    weights: LossWeights,
    variant: str = "flux-bc",
    obs_boundary: ObservationField | None = None,
    tv_epsilon: float = 1e-6,
) -> LossBreakdown:
    """Dirichlet loss with either the flux-data boundary term (``flux-bc``)
    or the direct conductivity boundary term (``q-bc``)."""
    if variant not in ("flux-bc", "q-bc"):
        raise ValueError(f"unknown Dirichlet variant: {variant!r}")
    if problem.q_boundary is None:
        raise ValueError("missing q_boundary for the Dirichlet assembly")
    _check_sigma_spec(sigma_net[0])
    tape = Tape()
    qn = TapeNet(tape, *q_net)
    sn = TapeNet(tape, *sigma_net)

    interior = colloc.interior
    if problem.is_partial and colloc.data_points is None:
        raise ValueError("partial-data problem needs a data point set")
    if problem.is_partial:
        data_measure = problem.domain.volume - problem.data_region.volume
    else:
        data_measure = problem.domain.volume
    data_pts = colloc.data_points if colloc.data_points is not None else interior
    _check_obs(obs, data_pts, "interior")

    q_int = qn.forward(interior, jacobian=True)
    s_int = sn.forward(interior, jacobian=True)
    if data_pts is interior:
        q_dat, s_dat = q_int, s_int
    else:
        q_dat = qn.forward(data_pts)
        s_dat = sn.forward(data_pts)

    vol = problem.domain.volume
    area = problem.domain.boundary_area
    n_int = interior.shape[0]

    data_node = _data_term(tape, q_dat.value, s_dat.value, obs.grad_z, problem.bounds, data_measure)
    div_node = _divergence_term(tape, s_int.input_grad, problem.source(interior), vol)
    q_at_boundary = np.asarray(problem.q_boundary(colloc.boundary))
    if variant == "flux-bc":
        _check_obs(obs_boundary, colloc.boundary, "boundary")
        s_bnd = sn.forward(colloc.boundary)
        bnd_node = _dirichlet_flux_term(
            tape, s_bnd.value, q_at_boundary, obs_boundary.grad_z, area
        )
    else:
        q_bnd_eval = qn.forward(colloc.boundary)
        bnd_node = _qvalue_boundary_term(tape, q_bnd_eval.value, q_at_boundary, area)
    semi_node, sq_norm = _seminorm_term(tape, q_int.input_grad, n_int, vol)

    parts = [(weights.gamma_sigma, div_node), (weights.gamma_b, bnd_node), (weights.gamma_q, semi_node)]
    tv_value = 0.0
    if weights.gamma_tv > 0.0:
        tv_node = _tv_term(tape, sq_norm, n_int, vol, tv_epsilon)
        parts.append((weights.gamma_tv, tv_node))
        tv_value = float(tape.value(tv_node))
    total_node = _chain_total(tape, data_node, parts)

    return LossBreakdown(
        data=float(tape.value(data_node)),
        divergence=float(tape.value(div_node)),
        boundary=float(tape.value(bnd_node)),
        seminorm=float(tape.value(semi_node)),
        tv=tv_value,
        total=float(tape.value(total_node)),
        tape=tape,
        total_node=total_node,
        q_net=qn,
        sigma_net=sn,
    )


def loss_gradient(assembled: LossBreakdown) -> np.ndarray:
    """Gradient of the total with respect to all parameters of both networks,
    ordered (q parameters, sigma parameters) in flatten_params layout."""
    if not np.isfinite(assembled.total):
        raise ValueError("non-finite loss value")
    adjoints = assembled.tape.backward(assembled.total_node)
    return np.concatenate(
        [assembled.q_net.gradient(adjoints), assembled.sigma_net.gradient(adjoints)]
    )
