"""Axis-aligned box domains and uniform collocation samplers.

All randomness goes through numpy's counter-based Philox generator so point
sets are reproducible across platforms for a given integer seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class BoxDomain:
    """Hyperrectangle (a_1,b_1) x ... x (a_d,b_d)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(a) for a in self.lower))
        object.__setattr__(self, "upper", tuple(float(b) for b in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower and upper must have equal positive length")
        if any(a >= b for a, b in zip(self.lower, self.upper)):
            raise ValueError("require lower < upper in every coordinate")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def boundary_area(self) -> float:
        sides = np.subtract(self.upper, self.lower)
        total = 0.0
        for i in range(self.dim):
            face = np.prod(np.delete(sides, i)) if self.dim > 1 else 1.0
            total += 2.0 * face
        return float(total)

    def face_measures(self) -> np.ndarray:
        """(2d,) measures ordered (axis0-, axis0+, axis1-, axis1+, ...)."""
        sides = np.subtract(self.upper, self.lower)
        out = np.empty(2 * self.dim)
        for i in range(self.dim):
            face = np.prod(np.delete(sides, i)) if self.dim > 1 else 1.0
            out[2 * i] = face
            out[2 * i + 1] = face
        return out

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def strictly_inside(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all((pts > np.asarray(self.lower)) & (pts < np.asarray(self.upper)), axis=1)


@dataclass
class CollocationSet:
    """Interior points, boundary points with outward unit normals, and the
    optional separate point set where interior data is observed."""

    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    data_points: np.ndarray | None = None

    def __post_init__(self):
        if self.boundary.shape != self.normals.shape:
            raise ValueError("boundary points and normals must have equal shapes")

    @property
    def n_r(self) -> int:
        return self.interior.shape[0]

    @property
    def n_b(self) -> int:
        return self.boundary.shape[0]


def sample_interior(domain: BoxDomain, n: int, seed: int) -> np.ndarray:
    """n i.i.d. uniform points in the open box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    u = rng.random((int(n), domain.dim))
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    return lo + (hi - lo) * u


def sample_boundary(domain: BoxDomain, n: int, seed: int):
    """n i.i.d. uniform points on the boundary plus outward unit normals.

    A face is chosen with probability proportional to its (d-1)-measure, then
    the point is uniform on that face.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    measures = domain.face_measures()
    probs = measures / measures.sum()
    faces = rng.choice(2 * domain.dim, size=int(n), p=probs)
    u = rng.random((int(n), domain.dim))
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    points = lo + (hi - lo) * u
    normals = np.zeros((int(n), domain.dim))
    axes = faces // 2
    sides = faces % 2  # 0 -> lower face, 1 -> upper face
    rows = np.arange(int(n))
    points[rows, axes] = np.where(sides == 0, lo[axes], hi[axes])
    normals[rows, axes] = np.where(sides == 0, -1.0, 1.0)
    return points, normals


def sample_subdomain(
    domain: BoxDomain, excluded: BoxDomain | None, n: int, seed: int
) -> np.ndarray:
    """n uniform points in domain minus the open excluded box (rejection).

    With no exclusion (``None``, the degenerate zero-volume case) the draw
    consumes the identical generator stream as :func:`sample_interior`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if excluded is not None:
        if excluded.dim != domain.dim:
            raise ValueError("excluded box dimension mismatch")
        if excluded.volume >= domain.volume:
            raise ValueError("excluded box covers the whole domain")
    rng = _rng(seed)
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    out = np.empty((int(n), domain.dim))
    filled = 0
    while filled < n:
        m = max(int(n), 1024)
        pts = lo + (hi - lo) * rng.random((m, domain.dim))
        keep = ~excluded.strictly_inside(pts) if excluded is not None else np.ones(m, bool)
        accepted = pts[keep]
        take = min(n - filled, accepted.shape[0])
        out[filled : filled + take] = accepted[:take]
        filled += take
    return out


def export_points_csv(path, points: np.ndarray, normals: np.ndarray | None = None) -> None:
    """One row per point: coordinates, then normal components when given."""
    pts = np.asarray(points, dtype=np.float64)
    d = pts.shape[1]
    header = [f"x{i + 1}" for i in range(d)]
    if normals is not None:
        header += [f"n{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(pts.shape[0]):
            row = [format(v, ".17g") for v in pts[k]]
            if normals is not None:
                row += [format(v, ".17g") for v in normals[k]]
            writer.writerow(row)
