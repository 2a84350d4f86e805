"""The catalog of synthetic conductivity problems and the observation model.

Each instance carries closed-form fields (conductivity, solution, gradient,
source, boundary flux) evaluated on (n, d) point arrays.  The source is
always f = -div(q grad u), assembled from hand-derived gradients so the
mixed-system residuals vanish at the ground truth.  One example (``discon``)
has no closed-form solution; its fields are backed by the finite-volume
solver on a fine grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import forward_fd
from .geometry import BoxDomain
from .network import AdmissibleBounds

EXAMPLE_IDS = (
    "neu1",
    "discon",
    "neu2",
    "neudim5",
    "neupartial2d",
    "neupartial3d",
    "diri1",
    "diridisctn",
    "diri2",
    "diridim5",
    "diripartial2d",
    "diripartial3d",
)

DATA_GRID_N = 256


@dataclass
class ProblemInstance:
    id: str
    dim: int
    domain: BoxDomain
    bc_kind: str  # "neumann" | "dirichlet"
    bounds: AdmissibleBounds
    q_true: Callable[[np.ndarray], np.ndarray]
    source: Callable[[np.ndarray], np.ndarray]
    u_true: Callable[[np.ndarray], np.ndarray] | None = None
    grad_u_true: Callable[[np.ndarray], np.ndarray] | None = None
    flux_bc: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    q_boundary: Callable[[np.ndarray], np.ndarray] | None = None
    data_region: BoxDomain | None = None
    grid_backed: bool = False

    @property
    def is_partial(self) -> bool:
        return self.data_region is not None


@dataclass
class ObservationField:
    """Noisy gradient observations at a fixed point set.

    ``scale`` is the max l-infinity norm of the exact gradient over the point
    set; the pointwise perturbation is delta * scale * standard normal.
    """

    points: np.ndarray
    grad_z: np.ndarray
    delta: float
    noise_seed: int
    scale: float


def synthesize_observation(
    problem: ProblemInstance, points: np.ndarray, delta: float, seed: int
) -> ObservationField:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if problem.grad_u_true is None:
        raise ValueError(f"example {problem.id!r} provides no exact gradient")
    pts = np.asarray(points, dtype=np.float64)
    gu = problem.grad_u_true(pts)
    scale = float(np.max(np.abs(gu)))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    iota = rng.standard_normal(gu.shape)
    grad_z = gu + (delta * scale) * iota
    return ObservationField(pts, grad_z, float(delta), int(seed), scale)


# -- closed-form building blocks --------------------------------------------


def _gaussian(amp: float, center, coefs):
    center = np.asarray(center, dtype=np.float64)
    coefs = np.asarray(coefs, dtype=np.float64)

    def val(pts):
        return amp * np.exp(-np.sum(coefs * (pts - center) ** 2, axis=1))

    def grad(pts):
        return val(pts)[:, None] * (-2.0 * coefs * (pts - center))

    return val, grad


def _cubic_ramp(dim: int):
    """u = sum_i (x_i + x_i^3 / 3), the solution used by most examples."""

    def u(pts):
        return np.sum(pts + pts**3 / 3.0, axis=1)

    def grad(pts):
        return 1.0 + pts**2

    def lap(pts):
        return 2.0 * np.sum(pts, axis=1)

    return u, grad, lap


def _sigmoid(w: np.ndarray) -> np.ndarray:
    # overflow-safe logistic 1 / (1 + exp(w))
    out = np.empty_like(w)
    pos = w >= 0
    out[pos] = np.exp(-w[pos]) / (1.0 + np.exp(-w[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(w[~pos]))
    return out


def _source_from(q, grad_q, grad_u, lap_u):
    def f(pts):
        return -(np.sum(grad_q(pts) * grad_u(pts), axis=1) + q(pts) * lap_u(pts))

    return f


def _neumann_flux(q, grad_u):
    def g(pts, normals):
        return q(pts) * np.sum(grad_u(pts) * normals, axis=1)

    return g


def _closed_form_instance(
    id, domain, bc_kind, bounds, q, grad_q, u, grad_u, lap_u, data_region=None
):
    f = _source_from(q, grad_q, grad_u, lap_u)
    inst = ProblemInstance(
        id=id,
        dim=domain.dim,
        domain=domain,
        bc_kind=bc_kind,
        bounds=bounds,
        q_true=q,
        source=f,
        u_true=u,
        grad_u_true=grad_u,
        data_region=data_region,
    )
    if bc_kind == "neumann":
        inst.flux_bc = _neumann_flux(q, grad_u)
    else:
        inst.q_boundary = q
    return inst


# -- the grid-backed example -------------------------------------------------


class _GridBackedFields:
    """Lazy finite-volume data generation for the discontinuous example."""

    def __init__(self, domain: BoxDomain, q_fn, g_fn, n_cells: int = DATA_GRID_N):
        self.domain = domain
        self.q_fn = q_fn
        self.g_fn = g_fn
        self.n_cells = n_cells
        self._fields = None

    def _solve(self):
        if self._fields is not None:
            return self._fields
        lower = self.domain.lower
        h = (self.domain.upper[0] - lower[0]) / self.n_cells
        nx = ny = self.n_cells
        q_grid = forward_fd.grid_from_function(lower, h, nx, ny, self.q_fn)
        f_grid = forward_fd.Grid2D(nx, ny, lower, h, np.zeros((nx, ny)))
        faces = forward_fd.boundary_face_midpoints(lower, h, nx, ny)
        flux = forward_fd.FaceFlux(
            left=self.g_fn(*faces["left"]),
            right=self.g_fn(*faces["right"]),
            bottom=self.g_fn(*faces["bottom"]),
            top=self.g_fn(*faces["top"]),
        )
        u_grid = forward_fd.solve_neumann(q_grid, f_grid, flux, h)
        grad = forward_fd.gradient_cells(u_grid, h)
        gx = forward_fd.Grid2D(nx, ny, lower, h, grad[:, :, 0])
        gy = forward_fd.Grid2D(nx, ny, lower, h, grad[:, :, 1])
        self._fields = (u_grid, gx, gy)
        return self._fields

    def u(self, pts):
        u_grid, _, _ = self._solve()
        return forward_fd.interpolate(u_grid, pts)

    def grad_u(self, pts):
        _, gx, gy = self._solve()
        return np.column_stack(
            [forward_fd.interpolate(gx, pts), forward_fd.interpolate(gy, pts)]
        )


# -- catalog -----------------------------------------------------------------


def make_example(example_id: str) -> ProblemInstance:
    """Build one of the twelve catalog instances by id."""
    if example_id not in EXAMPLE_IDS:
        raise ValueError(f"unknown example id: {example_id!r}")
    return _BUILDERS[example_id]()


def _make_neu1():
    domain = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    s1, g1 = _gaussian(0.3, (0.3, 0.3), (20.0, 15.0))
    s2, g2 = _gaussian(-0.3, (0.0, -0.5), (10.0, 10.0))
    s3, g3 = _gaussian(0.2, (-0.4, 0.35), (15.0, 15.0))

    def q(pts):
        return 1.0 + s1(pts) + s2(pts) + s3(pts)

    def grad_q(pts):
        return g1(pts) + g2(pts) + g3(pts)

    u, grad_u, lap_u = _cubic_ramp(2)
    return _closed_form_instance(
        "neu1", domain, "neumann", AdmissibleBounds(0.5, 2.6), q, grad_q, u, grad_u, lap_u
    )


def _make_discon():
    domain = BoxDomain((-1.0, -1.0), (1.0, 1.0))

    def q(pts):
        inside = (pts[:, 0] + 0.15) ** 2 + (pts[:, 1] + 0.3) ** 2 <= 0.25**2
        return 1.0 + 0.25 * inside.astype(np.float64)

    def f(pts):
        return np.zeros(pts.shape[0])

    def g(pts, normals):
        return pts[:, 0]

    backing = _GridBackedFields(domain, q, g)
    return ProblemInstance(
        id="discon",
        dim=2,
        domain=domain,
        bc_kind="neumann",
        bounds=AdmissibleBounds(0.5, 2.5),
        q_true=q,
        source=f,
        u_true=backing.u,
        grad_u_true=backing.grad_u,
        flux_bc=g,
        grid_backed=True,
    )


def _make_neu2():
    domain = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    s, gs = _gaussian(0.3, (0.5, 0.5, 0.5), (20.0, 20.0, 20.0))

    def q(pts):
        return 1.0 + s(pts)

    u, grad_u, lap_u = _cubic_ramp(3)
    return _closed_form_instance(
        "neu2", domain, "neumann", AdmissibleBounds(0.5, 2.6), q, gs, u, grad_u, lap_u
    )


def _make_neudim5():
    domain = BoxDomain((0.0,) * 5, (1.0,) * 5)

    def q(pts):
        return (
            1.0
            - (pts[:, 0] - 0.5) ** 2
            - (pts[:, 1] - 0.5) ** 2
            + np.cos(np.pi * (pts[:, 2] + 1.5))
            + np.cos(np.pi * (pts[:, 3] + 1.5))
            + np.cos(np.pi * (pts[:, 4] + 1.5))
        )

    def grad_q(pts):
        out = np.empty_like(pts)
        out[:, 0] = -2.0 * (pts[:, 0] - 0.5)
        out[:, 1] = -2.0 * (pts[:, 1] - 0.5)
        for k in (2, 3, 4):
            out[:, k] = -np.pi * np.sin(np.pi * (pts[:, k] + 1.5))
        return out

    u, grad_u, lap_u = _cubic_ramp(5)
    return _closed_form_instance(
        "neudim5", domain, "neumann", AdmissibleBounds(0.2, 8.0), q, grad_q, u, grad_u, lap_u
    )


def _sin2pi_conductivity():
    def q(pts):
        return 2.0 + 0.5 * np.sin(2 * np.pi * pts[:, 0]) * np.sin(2 * np.pi * pts[:, 1])

    def grad_q(pts):
        sx = np.sin(2 * np.pi * pts[:, 0])
        sy = np.sin(2 * np.pi * pts[:, 1])
        cx = np.cos(2 * np.pi * pts[:, 0])
        cy = np.cos(2 * np.pi * pts[:, 1])
        return np.column_stack([np.pi * cx * sy, np.pi * sx * cy])

    return q, grad_q


def _make_neupartial2d():
    domain = BoxDomain((0.0, 0.0), (1.0, 1.0))
    q, grad_q = _sin2pi_conductivity()
    u, grad_u, lap_u = _cubic_ramp(2)
    return _closed_form_instance(
        "neupartial2d",
        domain,
        "neumann",
        AdmissibleBounds(0.7, 5.0),
        q,
        grad_q,
        u,
        grad_u,
        lap_u,
        data_region=BoxDomain((0.2, 0.2), (0.8, 0.8)),
    )


def _make_neupartial3d():
    domain = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    def q(pts):
        return (
            2.0
            + 0.25 * np.cos(np.pi * (pts[:, 0] + 1.5))
            + 0.5 * np.cos(np.pi * (pts[:, 1] + 1.5))
            + 0.5 * pts[:, 2] ** 2
        )

    def grad_q(pts):
        return np.column_stack(
            [
                -0.25 * np.pi * np.sin(np.pi * (pts[:, 0] + 1.5)),
                -0.5 * np.pi * np.sin(np.pi * (pts[:, 1] + 1.5)),
                pts[:, 2],
            ]
        )

    u, grad_u, lap_u = _cubic_ramp(3)
    return _closed_form_instance(
        "neupartial3d",
        domain,
        "neumann",
        AdmissibleBounds(1.0, 6.5),
        q,
        grad_q,
        u,
        grad_u,
        lap_u,
        data_region=BoxDomain((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)),
    )


def _make_diri1():
    domain = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    s1, g1 = _gaussian(0.4, (0.5, 0.0), (15.0, 15.0))
    s2, g2 = _gaussian(-0.4, (-0.5, 0.0), (15.0, 15.0))

    def q(pts):
        return 1.0 + s1(pts) + s2(pts)

    def grad_q(pts):
        return g1(pts) + g2(pts)

    u, grad_u, lap_u = _cubic_ramp(2)
    return _closed_form_instance(
        "diri1", domain, "dirichlet", AdmissibleBounds(0.3, 2.8), q, grad_q, u, grad_u, lap_u
    )


def _make_diridisctn():
    domain = BoxDomain((0.0, 0.0), (1.0, 1.0))

    def _w(pts):
        return 400.0 * ((pts[:, 0] - 0.65) ** 2 + 2.0 * (pts[:, 1] - 0.7) ** 2 - 0.15**2)

    def q(pts):
        return 1.0 + 0.3 * _sigmoid(_w(pts))

    def grad_q(pts):
        s = _sigmoid(_w(pts))
        common = -0.3 * s * (1.0 - s)
        return np.column_stack(
            [common * 800.0 * (pts[:, 0] - 0.65), common * 1600.0 * (pts[:, 1] - 0.7)]
        )

    def u(pts):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    def grad_u(pts):
        return np.pi * np.column_stack(
            [
                np.cos(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]),
                np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1]),
            ]
        )

    def lap_u(pts):
        return -2.0 * np.pi**2 * u(pts)

    return _closed_form_instance(
        "diridisctn", domain, "dirichlet", AdmissibleBounds(0.5, 2.6), q, grad_q, u, grad_u, lap_u
    )


def _make_diri2():
    domain = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    def q(pts):
        w = 12.0 * (pts[:, 0] - 0.5) * (pts[:, 1] - 0.5)
        return 1.0 + np.exp(-(w**2)) + pts[:, 2]

    def grad_q(pts):
        w = 12.0 * (pts[:, 0] - 0.5) * (pts[:, 1] - 0.5)
        e = np.exp(-(w**2)) * (-2.0 * w)
        return np.column_stack(
            [e * 12.0 * (pts[:, 1] - 0.5), e * 12.0 * (pts[:, 0] - 0.5), np.ones(pts.shape[0])]
        )

    u, grad_u, lap_u = _cubic_ramp(3)
    return _closed_form_instance(
        "diri2", domain, "dirichlet", AdmissibleBounds(0.5, 6.0), q, grad_q, u, grad_u, lap_u
    )


def _make_diridim5():
    domain = BoxDomain((0.0,) * 5, (1.0,) * 5)
    bump, _ = _gaussian(-0.3, (0.5, 0.5), (25.0, 25.0))

    def q(pts):
        return (
            1.0
            + 0.5 * (pts[:, 0] * pts[:, 4] + pts[:, 1] * pts[:, 3] + pts[:, 2] ** 2)
            + bump(pts[:, :2])
        )

    def grad_q(pts):
        b = bump(pts[:, :2])
        out = np.empty_like(pts)
        out[:, 0] = 0.5 * pts[:, 4] + b * (-50.0 * (pts[:, 0] - 0.5))
        out[:, 1] = 0.5 * pts[:, 3] + b * (-50.0 * (pts[:, 1] - 0.5))
        out[:, 2] = pts[:, 2]
        out[:, 3] = 0.5 * pts[:, 1]
        out[:, 4] = 0.5 * pts[:, 0]
        return out

    u, grad_u, lap_u = _cubic_ramp(5)
    return _closed_form_instance(
        "diridim5", domain, "dirichlet", AdmissibleBounds(0.3, 5.0), q, grad_q, u, grad_u, lap_u
    )


def _make_diripartial2d():
    domain = BoxDomain((0.0, 0.0), (1.0, 1.0))
    q, grad_q = _sin2pi_conductivity()
    u, grad_u, lap_u = _cubic_ramp(2)
    return _closed_form_instance(
        "diripartial2d",
        domain,
        "dirichlet",
        AdmissibleBounds(0.7, 5.0),
        q,
        grad_q,
        u,
        grad_u,
        lap_u,
        data_region=BoxDomain((0.2, 0.2), (0.8, 0.8)),
    )


def _make_diripartial3d():
    domain = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    def q(pts):
        return 2.0 + np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]) * np.sin(
            np.pi * pts[:, 2]
        )

    def grad_q(pts):
        s = np.sin(np.pi * pts)
        c = np.cos(np.pi * pts)
        return np.pi * np.column_stack(
            [
                c[:, 0] * s[:, 1] * s[:, 2],
                s[:, 0] * c[:, 1] * s[:, 2],
                s[:, 0] * s[:, 1] * c[:, 2],
            ]
        )

    u, grad_u, lap_u = _cubic_ramp(3)
    return _closed_form_instance(
        "diripartial3d",
        domain,
        "dirichlet",
        AdmissibleBounds(1.0, 6.0),
        q,
        grad_q,
        u,
        grad_u,
        lap_u,
        data_region=BoxDomain((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)),
    )


def _balance_source(f_grid, flux, h):
    """Shift f by a constant so the discrete compatibility sum vanishes.

    Midpoint sampling of a compatible (f, g) pair leaves an O(h^2) imbalance,
    which the solver's strict gate would reject; the shift is far below the
    discretization error.
    """
    imbalance = float(f_grid.values.sum()) * h * h + h * float(
        flux.left.sum() + flux.right.sum() + flux.bottom.sum() + flux.top.sum()
    )
    f_grid.values = f_grid.values - imbalance / (f_grid.nx * f_grid.ny * h * h)
    return f_grid


def fd_solve_fields(problem: ProblemInstance, n_cells: int = DATA_GRID_N):
    """Finite-volume solve of a 2D Neumann instance; returns (u, grad_x, grad_y) grids."""
    if problem.dim != 2 or problem.bc_kind != "neumann":
        raise ValueError("finite-volume solve supports 2D Neumann instances only")
    lower = problem.domain.lower
    h = (problem.domain.upper[0] - lower[0]) / n_cells
    q_grid = forward_fd.grid_from_function(lower, h, n_cells, n_cells, problem.q_true)
    f_grid = forward_fd.grid_from_function(lower, h, n_cells, n_cells, problem.source)
    faces = forward_fd.boundary_face_midpoints(lower, h, n_cells, n_cells)
    flux = forward_fd.FaceFlux(
        left=problem.flux_bc(*faces["left"]),
        right=problem.flux_bc(*faces["right"]),
        bottom=problem.flux_bc(*faces["bottom"]),
        top=problem.flux_bc(*faces["top"]),
    )
    f_grid = _balance_source(f_grid, flux, h)
    u_grid = forward_fd.solve_neumann(q_grid, f_grid, flux, h)
    grad = forward_fd.gradient_cells(u_grid, h)
    gx = forward_fd.Grid2D(n_cells, n_cells, lower, h, grad[:, :, 0])
    gy = forward_fd.Grid2D(n_cells, n_cells, lower, h, grad[:, :, 1])
    return u_grid, gx, gy


_BUILDERS = {
    "neu1": _make_neu1,
    "discon": _make_discon,
    "neu2": _make_neu2,
    "neudim5": _make_neudim5,
    "neupartial2d": _make_neupartial2d,
    "neupartial3d": _make_neupartial3d,
    "diri1": _make_diri1,
    "diridisctn": _make_diridisctn,
    "diri2": _make_diri2,
    "diridim5": _make_diridim5,
    "diripartial2d": _make_diripartial2d,
    "diripartial3d": _make_diripartial3d,
}
