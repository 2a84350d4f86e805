"""Cell-centered finite-volume solver for -div(q grad u) = f with Neumann flux.

Used to generate interior gradient data for the example whose solution has no
closed form, and to validate problem instances.  The five-point scheme uses
harmonic averaging of the conductivity at faces; the singular Neumann system
is solved by preconditioned conjugate gradients and pinned by a zero-mean
constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CG_TOL = 1e-12
COMPAT_TOL = 1e-8
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class Grid2D:
    """Uniform square-cell grid; values[i, j] sits at the center of cell
    (i, j) with i indexing x and j indexing y."""

    nx: int
    ny: int
    lower: tuple[float, float]
    h: float
    values: np.ndarray

    def __post_init__(self):
        if self.nx * self.ny < 4 or self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        if self.values.shape != (self.nx, self.ny):
            raise ValueError(f"values shape {self.values.shape} != ({self.nx}, {self.ny})")

    @property
    def upper(self) -> tuple[float, float]:
        return (self.lower[0] + self.nx * self.h, self.lower[1] + self.ny * self.h)

    def cell_centers(self):
        x = self.lower[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.lower[1] + (np.arange(self.ny) + 0.5) * self.h
        return x, y

    def meshgrid(self):
        x, y = self.cell_centers()
        return np.meshgrid(x, y, indexing="ij")


@dataclass
class FaceFlux:
    """Prescribed outward flux q du/dn at boundary-face midpoints."""

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray


def grid_from_function(lower, h, nx, ny, fn) -> Grid2D:
    grid = Grid2D(nx, ny, tuple(lower), h, np.zeros((nx, ny)))
    X, Y = grid.meshgrid()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    grid.values = fn(pts).reshape(nx, ny)
    return grid


def boundary_face_midpoints(lower, h, nx, ny):
    """Midpoints and outward normals of the four boundary-face families."""
    x0, y0 = lower
    xc = x0 + (np.arange(nx) + 0.5) * h
    yc = y0 + (np.arange(ny) + 0.5) * h
    faces = {
        "left": (np.column_stack([np.full(ny, x0), yc]), np.tile([-1.0, 0.0], (ny, 1))),
        "right": (np.column_stack([np.full(ny, x0 + nx * h), yc]), np.tile([1.0, 0.0], (ny, 1))),
        "bottom": (np.column_stack([xc, np.full(nx, y0)]), np.tile([0.0, -1.0], (nx, 1))),
        "top": (np.column_stack([xc, np.full(nx, y0 + ny * h)]), np.tile([0.0, 1.0], (nx, 1))),
    }
    return faces


def _harmonic_faces(q: np.ndarray):
    qx = 2.0 * q[:-1, :] * q[1:, :] / (q[:-1, :] + q[1:, :])
    qy = 2.0 * q[:, :-1] * q[:, 1:] / (q[:, :-1] + q[:, 1:])
    return qx, qy


def solve_neumann(q_cells: Grid2D, f_cells: Grid2D, g_faces: FaceFlux, h: float | None = None) -> Grid2D:
    """Solve the flux form of the Neumann problem on the grid of ``q_cells``.

    The prescribed fluxes must be discretely compatible with the source
    (|sum f h^2 + sum g h| <= 1e-8); the returned field has zero mean and
    relative algebraic residual below 1e-10.
    """
    q = q_cells.values
    f = f_cells.values
    if h is None:
        h = q_cells.h
    nx, ny = q_cells.nx, q_cells.ny
    if f.shape != q.shape:
        raise ValueError("q and f grids must share a shape")
    if np.any(q <= 0.0):
        raise SolverError("conductivity must be strictly positive")

    b = f * h * h
    b[0, :] += g_faces.left * h
    b[-1, :] += g_faces.right * h
    b[:, 0] += g_faces.bottom * h
    b[:, -1] += g_faces.top * h
    imbalance = float(b.sum())
    if abs(imbalance) > COMPAT_TOL:
        raise SolverError(f"incompatible data: sum f h^2 + sum g h = {imbalance:.3e}")
    b = b - b.mean()

    qx, qy = _harmonic_faces(q)

    def apply_A(u):
        out = np.zeros_like(u)
        fx = qx * (u[:-1, :] - u[1:, :])
        out[:-1, :] += fx
        out[1:, :] -= fx
        fy = qy * (u[:, :-1] - u[:, 1:])
        out[:, :-1] += fy
        out[:, 1:] -= fy
        return out

    diag = np.zeros_like(q)
    diag[:-1, :] += qx
    diag[1:, :] += qx
    diag[:, :-1] += qy
    diag[:, 1:] += qy

    u = np.zeros_like(b)
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = float((r * z).sum())
    norm_b = float(np.sqrt((b * b).sum()))
    if norm_b == 0.0:
        return Grid2D(nx, ny, q_cells.lower, h, u)
    max_iter = 200 * max(nx, ny)
    for _ in range(max_iter):
        Ap = apply_A(p)
        alpha = rz / float((p * Ap).sum())
        u += alpha * p
        r -= alpha * Ap
        if float(np.sqrt((r * r).sum())) <= CG_TOL * norm_b:
            break
        z = r / diag
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    else:
        raise SolverError("conjugate gradients did not converge")

    u -= u.mean()
    res = apply_A(u) - b
    rel = float(np.sqrt((res * res).sum())) / norm_b
    if rel > RESIDUAL_TOL:
        raise SolverError(f"relative residual {rel:.3e} above tolerance")
    return Grid2D(nx, ny, q_cells.lower, h, u)


def gradient_cells(u_cells: Grid2D, h: float | None = None) -> np.ndarray:
    """Per-cell gradient (nx, ny, 2): central differences in the interior,
    one-sided second-order stencils in the boundary layer."""
    u = u_cells.values
    if h is None:
        h = u_cells.h
    nx, ny = u.shape
    if nx < 3 or ny < 3:
        raise ValueError("gradient needs at least 3 cells per axis")
    grad = np.empty((nx, ny, 2))
    grad[1:-1, :, 0] = (u[2:, :] - u[:-2, :]) / (2.0 * h)
    grad[0, :, 0] = (-3.0 * u[0, :] + 4.0 * u[1, :] - u[2, :]) / (2.0 * h)
    grad[-1, :, 0] = (3.0 * u[-1, :] - 4.0 * u[-2, :] + u[-3, :]) / (2.0 * h)
    grad[:, 1:-1, 1] = (u[:, 2:] - u[:, :-2]) / (2.0 * h)
    grad[:, 0, 1] = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * h)
    grad[:, -1, 1] = (3.0 * u[:, -1] - 4.0 * u[:, -2] + u[:, -3]) / (2.0 * h)
    return grad


def interpolate(values: Grid2D, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation from the 4 surrounding cell centers; inside the
    half-cell margin next to the boundary the stencil clamps to the edge."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    x0, y0 = values.lower
    x1, y1 = values.upper
    eps = 1e-12 * max(values.nx, values.ny) * values.h
    if np.any(pts[:, 0] < x0 - eps) or np.any(pts[:, 0] > x1 + eps):
        raise ValueError("point outside domain")
    if np.any(pts[:, 1] < y0 - eps) or np.any(pts[:, 1] > y1 + eps):
        raise ValueError("point outside domain")

    def axis_weights(coord, lo, n):
        s = (coord - lo) / values.h - 0.5
        i0 = np.clip(np.floor(s), 0, n - 2).astype(int)
        t = np.clip(s - i0, 0.0, 1.0)
        return i0, t

    ix, tx = axis_weights(pts[:, 0], x0, values.nx)
    iy, ty = axis_weights(pts[:, 1], y0, values.ny)
    v = values.values
    v00 = v[ix, iy]
    v10 = v[ix + 1, iy]
    v01 = v[ix, iy + 1]
    v11 = v[ix + 1, iy + 1]
    return (
        (1 - tx) * (1 - ty) * v00
        + tx * (1 - ty) * v10
        + (1 - tx) * ty * v01
        + tx * ty * v11
    )


def save_grid_csv(path, grid: Grid2D) -> None:
    """One header line (nx, ny, bounds) then ny rows of nx values."""
    x1, y1 = grid.upper
    with open(path, "w") as fh:
        fh.write(
            f"{grid.nx},{grid.ny},{grid.lower[0]!r},{grid.lower[1]!r},{x1!r},{y1!r}\n"
        )
        for j in range(grid.ny):
            fh.write(",".join(format(v, ".17g") for v in grid.values[:, j]) + "\n")


def load_grid_csv(path) -> Grid2D:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        nx, ny = int(header[0]), int(header[1])
        x0, y0, x1, _ = (float(v) for v in header[2:6])
        h = (x1 - x0) / nx
        values = np.empty((nx, ny))
        for j in range(ny):
            row = fh.readline().strip().split(",")
            values[:, j] = [float(v) for v in row]
    return Grid2D(nx, ny, (x0, y0), h, values)
