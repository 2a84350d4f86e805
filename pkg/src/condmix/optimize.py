"""ADAM with a stagewise decaying learning-rate schedule and the training loop.

One epoch is one full-batch gradient step over the fixed collocation sets.
Everything downstream of the integer seed is deterministic: point sets, noise,
initialization and the update sequence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import loss as loss_mod
from . import metrics
from .geometry import (
    BoxDomain,
    CollocationSet,
    sample_boundary,
    sample_interior,
    sample_subdomain,
)
from .loss import LossWeights
from .network import (
    AdmissibleBounds,
    MlpSpec,
    ParamSet,
    flatten_params,
    init_params,
    mlp_forward_batch,
    unflatten_params,
)
from .problems import ObservationField, ProblemInstance, synthesize_observation

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DEFAULT_HIDDEN = (26, 26, 26, 10)

VARIANTS = ("neumann", "dirichlet-fluxbc", "dirichlet-qbc")


class NonFiniteLossError(RuntimeError):
    """Raised when the loss leaves the finite range; carries a diagnostic state."""

    def __init__(self, epoch, q_params, sigma_params):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.q_params = q_params
        self.sigma_params = sigma_params


@dataclass
class TrainConfig:
    lr0: float
    dr: float
    step: int
    epochs: int
    seed: int
    n_r: int
    n_b: int
    weights: LossWeights
    q_hidden: tuple[int, ...] = DEFAULT_HIDDEN
    sigma_hidden: tuple[int, ...] = DEFAULT_HIDDEN
    delta: float = 0.0
    variant: str = "neumann"
    trace_interval: int = 100
    tv_epsilon: float = 1e-6
    n_data: int | None = None
    resample_per_epoch: bool = False

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0.0 < self.dr <= 1.0):
            raise ValueError("dr must lie in (0, 1]")
        if self.step < 1 or self.epochs < 1:
            raise ValueError("step and epochs must be >= 1")
        if self.n_r < 1 or self.n_b < 1:
            raise ValueError("n_r and n_b must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass
class TraceRow:
    epoch: int
    lr: float
    total: float
    data: float
    divergence: float
    boundary: float
    seminorm: float
    tv: float
    rel_error: float


@dataclass
class TrainResult:
    problem_id: str
    q_spec: MlpSpec
    q_params: ParamSet
    sigma_spec: MlpSpec
    sigma_params: ParamSet
    trace: list[TraceRow]
    checkpoints: list[tuple[int, ParamSet, ParamSet]]
    colloc: CollocationSet
    observation: ObservationField
    observation_boundary: ObservationField | None
    config: TrainConfig
    wall_time_s: float


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    """Stagewise decay lr0 * dr^floor(epoch / step)."""
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    return config.lr0 * config.dr ** (epoch // config.step)


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray, lr: float):
    """One bias-corrected ADAM update; returns the new (state, params)."""
    if gradient.shape != params.shape:
        raise ValueError("gradient and parameter shapes disagree")
    if not np.isfinite(gradient).all():
        raise ValueError("non-finite gradient entries")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * gradient
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * gradient * gradient
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return AdamState(m, v, t), new_params


def _derived_seeds(seed: int) -> list[int]:
    state = np.random.SeedSequence(int(seed)).generate_state(8)
    return [int(s) for s in state]


def _sample_collocation(problem: ProblemInstance, config: TrainConfig, seeds) -> CollocationSet:
    interior = sample_interior(problem.domain, config.n_r, seeds[0])
    boundary, normals = sample_boundary(problem.domain, config.n_b, seeds[1])
    data_points = None
    if problem.is_partial:
        n_data = config.n_data if config.n_data is not None else config.n_r
        data_points = sample_subdomain(problem.domain, problem.data_region, n_data, seeds[2])
    return CollocationSet(interior, boundary, normals, data_points)


def _cache_static_fields(problem: ProblemInstance) -> ProblemInstance:
    """Memoize field evaluations on the fixed collocation arrays.

    The loss assemblies re-evaluate f, g and the boundary conductivity every
    epoch on point sets that never change; caching keys on array identity.
    """
    import copy

    cached = copy.copy(problem)

    def memo1(fn):
        store = {}

        def wrapped(pts):
            key = id(pts)
            if key not in store:
                store[key] = fn(pts)
            return store[key]

        return wrapped

    def memo2(fn):
        store = {}

        def wrapped(pts, normals):
            key = (id(pts), id(normals))
            if key not in store:
                store[key] = fn(pts, normals)
            return store[key]

        return wrapped

    cached.source = memo1(problem.source)
    if problem.flux_bc is not None:
        cached.flux_bc = memo2(problem.flux_bc)
    if problem.q_boundary is not None:
        cached.q_boundary = memo1(problem.q_boundary)
    return cached


def _assemble(problem, config, q_pair, sigma_pair, colloc, obs, obs_boundary):
    if config.variant == "neumann":
        return loss_mod.assemble_neumann(
            q_pair, sigma_pair, problem, colloc, obs, config.weights, config.tv_epsilon
        )
    variant = "flux-bc" if config.variant == "dirichlet-fluxbc" else "q-bc"
    return loss_mod.assemble_dirichlet(
        q_pair,
        sigma_pair,
        problem,
        colloc,
        obs,
        config.weights,
        variant=variant,
        obs_boundary=obs_boundary,
        tv_epsilon=config.tv_epsilon,
    )


def _trace_error_settings(dim: int) -> tuple[str, int]:
    if dim <= 2:
        return "grid", 128
    if dim == 3:
        return "grid", 32
    return "montecarlo", 20_000


def reconstruction_callable(q_spec: MlpSpec, q_params: ParamSet):
    """The fitted conductivity as a plain callable on (n, d) points."""

    def q_hat(pts):
        return mlp_forward_batch(q_spec, q_params, pts)[:, 0]

    return q_hat


def train(
    problem: ProblemInstance,
    config: TrainConfig,
    observation: ObservationField | None = None,
) -> TrainResult:
    """Fit the conductivity and flux networks on one problem instance.

    With an explicit ``observation`` its points become the data-term point
    set; otherwise the observation is synthesized on the sampled points.
    """
    if config.variant == "neumann" and problem.bc_kind != "neumann":
        raise ValueError("variant 'neumann' requires a Neumann problem")
    if config.variant != "neumann" and problem.bc_kind != "dirichlet":
        raise ValueError("Dirichlet variants require a Dirichlet problem")
    start = time.perf_counter()
    seeds = _derived_seeds(config.seed)
    problem = _cache_static_fields(problem)
    colloc = _sample_collocation(problem, config, seeds)
    if observation is not None:
        colloc.data_points = observation.points
        obs = observation
    else:
        data_pts = colloc.data_points if problem.is_partial else colloc.interior
        obs = synthesize_observation(problem, data_pts, config.delta, seeds[3])
    obs_boundary = None
    if config.variant == "dirichlet-fluxbc":
        obs_boundary = synthesize_observation(problem, colloc.boundary, config.delta, seeds[4])

    d = problem.dim
    q_spec = MlpSpec(d, tuple(config.q_hidden), 1)
    sigma_spec = MlpSpec(d, tuple(config.sigma_hidden), d)
    q_params = init_params(q_spec, seeds[5])
    # start the conductivity inside the admissible box so the projection mask
    # does not zero out the data-term gradient at initialization
    q_params.biases[-1][:] = problem.bounds.midpoint
    sigma_params = init_params(sigma_spec, seeds[6])
    # start the flux at the data-consistent constant field; otherwise the
    # data term drags q below c0 (where the projection gradient vanishes)
    # faster than the PDE terms can pull sigma up to the true flux
    sigma_params.biases[-1][:] = problem.bounds.midpoint * obs.grad_z.mean(axis=0)

    n_q = q_spec.n_params
    flat = np.concatenate([flatten_params(q_params), flatten_params(sigma_params)])
    state = AdamState.zeros(flat.size)

    err_mode, err_res = _trace_error_settings(d)

    def rel_error(qp: ParamSet) -> float:
        if problem.q_true is None:
            return float("nan")
        return metrics.relative_l2_error(
            reconstruction_callable(q_spec, qp),
            problem.q_true,
            problem.domain,
            bounds=problem.bounds,
            mode=err_mode,
            resolution=err_res,
            apply_projection=True,
        )

    trace: list[TraceRow] = []
    checkpoints: list[tuple[int, ParamSet, ParamSet]] = []
    for epoch in range(config.epochs):
        if config.resample_per_epoch and epoch > 0 and observation is None:
            epoch_seeds = [
                int(s)
                for s in np.random.SeedSequence((config.seed, epoch)).generate_state(8)
            ]
            colloc = _sample_collocation(problem, config, epoch_seeds)
            data_pts = colloc.data_points if problem.is_partial else colloc.interior
            obs = synthesize_observation(problem, data_pts, config.delta, epoch_seeds[3])
            if config.variant == "dirichlet-fluxbc":
                obs_boundary = synthesize_observation(
                    problem, colloc.boundary, config.delta, epoch_seeds[4]
                )
        q_params = unflatten_params(q_spec, flat[:n_q])
        sigma_params = unflatten_params(sigma_spec, flat[n_q:])
        breakdown = _assemble(
            problem, config, (q_spec, q_params), (sigma_spec, sigma_params),
            colloc, obs, obs_boundary,
        )
        if not np.isfinite(breakdown.total):
            raise NonFiniteLossError(epoch, q_params, sigma_params)
        lr = lr_schedule(config, epoch)
        if epoch % config.trace_interval == 0:
            trace.append(
                TraceRow(
                    epoch=epoch,
                    lr=lr,
                    total=breakdown.total,
                    data=breakdown.data,
                    divergence=breakdown.divergence,
                    boundary=breakdown.boundary,
                    seminorm=breakdown.seminorm,
                    tv=breakdown.tv,
                    rel_error=rel_error(q_params),
                )
            )
        grad = loss_mod.loss_gradient(breakdown)
        state, flat = adam_step(state, flat, grad, lr)
        if (epoch + 1) % config.step == 0 and epoch + 1 < config.epochs:
            checkpoints.append(
                (
                    epoch + 1,
                    unflatten_params(q_spec, flat[:n_q]),
                    unflatten_params(sigma_spec, flat[n_q:]),
                )
            )

    q_params = unflatten_params(q_spec, flat[:n_q])
    sigma_params = unflatten_params(sigma_spec, flat[n_q:])
    checkpoints.append((config.epochs, q_params.copy(), sigma_params.copy()))
    return TrainResult(
        problem_id=problem.id,
        q_spec=q_spec,
        q_params=q_params,
        sigma_spec=sigma_spec,
        sigma_params=sigma_params,
        trace=trace,
        checkpoints=checkpoints,
        colloc=colloc,
        observation=obs,
        observation_boundary=obs_boundary,
        config=config,
        wall_time_s=time.perf_counter() - start,
    )
