"""Relative-error metric and grid exports for figures."""

from __future__ import annotations

import csv
import itertools

import numpy as np

from .geometry import BoxDomain
from .network import AdmissibleBounds, project_admissible


def default_error_settings(dim: int) -> tuple[str, int]:
    """Quadrature defaults per dimension: tensor grids up to 3D, Monte Carlo above."""
    if dim <= 2:
        return "grid", 256
    if dim == 3:
        return "grid", 64
    return "montecarlo", 1_000_000


def grid_points(domain: BoxDomain, resolution: int) -> np.ndarray:
    """Midpoint tensor grid with ``resolution`` cells per axis, (res^d, d)."""
    axes = [
        lo + (hi - lo) * (np.arange(resolution) + 0.5) / resolution
        for lo, hi in zip(domain.lower, domain.upper)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _sorted_sum(values: np.ndarray) -> float:
    # order-independent reduction: sort, then sequential sum
    return float(np.cumsum(np.sort(values))[-1])


def relative_l2_error(
    q_hat,
    q_true,
    domain: BoxDomain,
    bounds: AdmissibleBounds | None = None,
    mode: str = "grid",
    resolution: int | None = None,
    apply_projection: bool = True,
    seed: int = 0,
) -> float:
    """||q_true - q_hat|| / ||q_true|| in L2 over the domain.

    ``mode`` is "grid" (midpoint tensor quadrature, d <= 3) or "montecarlo"
    (``resolution`` uniform points).  With ``apply_projection`` the candidate
    is clamped into the admissible box before comparison.
    """
    if mode not in ("grid", "montecarlo"):
        raise ValueError(f"unknown mode: {mode!r}")
    if resolution is None:
        _, resolution = default_error_settings(domain.dim)
    if mode == "grid":
        if domain.dim > 3:
            raise ValueError("grid quadrature supports d <= 3; use montecarlo")
        pts = grid_points(domain, int(resolution))
    else:
        from .geometry import sample_interior

        pts = sample_interior(domain, int(resolution), seed)
    truth = np.asarray(q_true(pts), dtype=np.float64)
    cand = np.asarray(q_hat(pts), dtype=np.float64)
    if apply_projection:
        if bounds is None:
            raise ValueError("apply_projection requires bounds")
        cand, _ = project_admissible(cand, bounds)
    denom = _sorted_sum(truth**2)
    if denom == 0.0:
        raise ZeroDivisionError("q_true vanishes in L2")
    return float(np.sqrt(_sorted_sum((truth - cand) ** 2) / denom))


def slice_points(
    domain: BoxDomain, fixed: dict[int, float], resolution: int
) -> tuple[np.ndarray, tuple[int, int]]:
    """Tensor grid over the two free axes with the remaining axes pinned."""
    free = [i for i in range(domain.dim) if i not in fixed]
    if len(free) != 2:
        raise ValueError(f"slice must leave exactly 2 free axes, got {len(free)}")
    for axis, value in fixed.items():
        if not (domain.lower[axis] <= value <= domain.upper[axis]):
            raise ValueError(f"slice coordinate x{axis + 1}={value} outside domain")
    axes = {
        i: domain.lower[i]
        + (domain.upper[i] - domain.lower[i]) * (np.arange(resolution) + 0.5) / resolution
        for i in free
    }
    mesh = np.meshgrid(axes[free[0]], axes[free[1]], indexing="ij")
    pts = np.empty((resolution * resolution, domain.dim))
    pts[:, free[0]] = mesh[0].ravel()
    pts[:, free[1]] = mesh[1].ravel()
    for axis, value in fixed.items():
        pts[:, axis] = value
    return pts, (free[0], free[1])


def relative_l2_error_slice(
    q_hat,
    q_true,
    domain: BoxDomain,
    fixed: dict[int, float],
    resolution: int = 128,
    bounds: AdmissibleBounds | None = None,
    apply_projection: bool = True,
) -> float:
    """Relative L2 error restricted to a 2D cross-section of the domain."""
    pts, _ = slice_points(domain, fixed, resolution)
    truth = np.asarray(q_true(pts), dtype=np.float64)
    cand = np.asarray(q_hat(pts), dtype=np.float64)
    if apply_projection:
        if bounds is None:
            raise ValueError("apply_projection requires bounds")
        cand, _ = project_admissible(cand, bounds)
    denom = _sorted_sum(truth**2)
    if denom == 0.0:
        raise ZeroDivisionError("q_true vanishes on the slice")
    return float(np.sqrt(_sorted_sum((truth - cand) ** 2) / denom))


def export_grid(
    field,
    domain: BoxDomain,
    resolution: int,
    path,
    slice_spec: dict[int, float] | None = None,
) -> None:
    """Write ``field`` on an inclusive tensor grid as CSV (coordinates, value).

    In more than two dimensions ``slice_spec`` must pin all but two axes; the
    written rows still carry the full d coordinates.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2 per axis")
    d = domain.dim
    slice_spec = dict(slice_spec or {})
    free = [i for i in range(d) if i not in slice_spec]
    if len(free) != 2 and d >= 2:
        raise ValueError("export needs exactly 2 free axes; fix the rest via slice_spec")
    for axis, value in slice_spec.items():
        if not (domain.lower[axis] <= value <= domain.upper[axis]):
            raise ValueError(f"slice coordinate x{axis + 1}={value} outside domain")
    axes = {
        i: np.linspace(domain.lower[i], domain.upper[i], resolution) for i in free
    }
    mesh = np.meshgrid(axes[free[0]], axes[free[1]], indexing="ij")
    pts = np.empty((resolution * resolution, d))
    pts[:, free[0]] = mesh[0].ravel()
    pts[:, free[1]] = mesh[1].ravel()
    for axis, value in slice_spec.items():
        pts[:, axis] = value
    values = np.asarray(field(pts), dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["value"])
        for k in range(pts.shape[0]):
            writer.writerow(
                [format(v, ".17g") for v in pts[k]] + [format(values[k], ".17g")]
            )
