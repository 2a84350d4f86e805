import math

import numpy as np
import pytest

from condmix.geometry import (
    BoxDomain,
    export_points_csv,
    sample_boundary,
    sample_interior,
    sample_subdomain,
)

UNIT_SQUARE = BoxDomain((0.0, 0.0), (1.0, 1.0))


def test_domain_measures():
    box = BoxDomain((-1.0, -1.0), (1.0, 1.0))
    assert box.volume == 4.0
    assert box.boundary_area == 8.0
    cube = BoxDomain((0.0, 0.0, 0.0), (1.0, 2.0, 3.0))
    assert cube.volume == 6.0
    assert cube.boundary_area == 2 * (2 * 3 + 1 * 3 + 1 * 2)
    with pytest.raises(ValueError):
        BoxDomain((0.0, 1.0), (1.0, 1.0))


def test_interior_points_inside_and_deterministic():
    pts = sample_interior(UNIT_SQUARE, 1000, seed=5)
    assert pts.shape == (1000, 2)
    assert np.all((pts >= 0.0) & (pts <= 1.0))
    again = sample_interior(UNIT_SQUARE, 1000, seed=5)
    assert np.array_equal(pts, again)
    other = sample_interior(UNIT_SQUARE, 1000, seed=6)
    assert not np.array_equal(pts, other)
    with pytest.raises(ValueError):
        sample_interior(UNIT_SQUARE, 0, seed=1)


def test_interior_mean_within_clt_bound():
    n = 100_000
    pts = sample_interior(UNIT_SQUARE, n, seed=0)
    bound = 3.0 * (1.0 / math.sqrt(12.0)) / math.sqrt(n)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) <= bound)


def test_boundary_points_on_faces_with_unit_normals():
    pts, normals = sample_boundary(UNIT_SQUARE, 2000, seed=3)
    on_face = (pts == 0.0) | (pts == 1.0)
    assert np.all(on_face.sum(axis=1) == 1)
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    assert np.all((normals != 0).sum(axis=1) == 1)
    # outward: the nonzero normal component points away from the face value
    idx = np.argmax(np.abs(normals), axis=1)
    vals = pts[np.arange(pts.shape[0]), idx]
    signs = normals[np.arange(pts.shape[0]), idx]
    assert np.all(np.where(vals == 0.0, signs == -1.0, signs == 1.0))


def test_boundary_face_counts_binomial():
    n = 100_000
    pts, normals = sample_boundary(UNIT_SQUARE, n, seed=11)
    tol = 3.0 * math.sqrt(n * 0.25 * 0.75)
    for axis in range(2):
        for side, val in ((0, 0.0), (1, 1.0)):
            count = int(np.sum(pts[:, axis] == val))
            assert abs(count - n / 4) <= tol


def test_boundary_face_weighting_nonuniform_box():
    # box with side lengths 1 and 3: long faces get 3x the mass of short ones
    box = BoxDomain((0.0, 0.0), (1.0, 3.0))
    n = 80_000
    pts, _ = sample_boundary(box, n, seed=2)
    long_faces = int(np.sum((pts[:, 0] == 0.0) | (pts[:, 0] == 1.0)))
    frac = long_faces / n
    assert abs(frac - 6.0 / 8.0) < 0.01


def test_subdomain_rejection():
    excluded = BoxDomain((0.2, 0.2), (0.8, 0.8))
    pts = sample_subdomain(UNIT_SQUARE, excluded, 5000, seed=7)
    inside = np.all((pts > 0.2) & (pts < 0.8), axis=1)
    assert not inside.any()
    assert np.all((pts >= 0.0) & (pts <= 1.0))
    again = sample_subdomain(UNIT_SQUARE, excluded, 5000, seed=7)
    assert np.array_equal(pts, again)


def test_subdomain_acceptance_rate():
    # area ratio of the kept region is 1 - 0.36 = 0.64
    excluded = BoxDomain((0.2, 0.2), (0.8, 0.8))
    n = 100_000
    pts = sample_interior(UNIT_SQUARE, n, seed=9)
    accepted = int(np.sum(~np.all((pts > 0.2) & (pts < 0.8), axis=1)))
    sigma = math.sqrt(n * 0.64 * 0.36)
    assert abs(accepted - 0.64 * n) <= 3.0 * sigma


def test_subdomain_degenerate_exclusion_matches_interior():
    # no exclusion consumes the identical generator stream
    pts_direct = sample_interior(UNIT_SQUARE, 777, seed=4)
    pts_sub = sample_subdomain(UNIT_SQUARE, None, 777, seed=4)
    assert np.array_equal(pts_direct, pts_sub)
    # a vanishingly small excluded box that captures no samples acts the same
    tiny = BoxDomain((0.5, 0.5), (0.5 + 1e-15, 0.5 + 1e-15))
    pts_tiny = sample_subdomain(UNIT_SQUARE, tiny, 777, seed=4)
    assert np.array_equal(pts_direct, pts_tiny)


def test_subdomain_full_coverage_rejected():
    with pytest.raises(ValueError):
        sample_subdomain(UNIT_SQUARE, UNIT_SQUARE, 10, seed=0)


def _mc_slope(estimator, exact, ns, seeds):
    errs = []
    for n in ns:
        vals = [abs(estimator(n, s) - exact) for s in seeds]
        errs.append(np.mean(vals))
    slope = np.polyfit(np.log10(ns), np.log10(errs), 1)[0]
    return slope


def test_interior_monte_carlo_rate():
    # h(x) = exp(x1 + x2/2); integral over the unit square in closed form
    exact = (math.e - 1.0) * 2.0 * (math.exp(0.5) - 1.0)

    def estimate(n, seed):
        pts = sample_interior(UNIT_SQUARE, n, seed)
        return UNIT_SQUARE.volume * float(np.mean(np.exp(pts[:, 0] + 0.5 * pts[:, 1])))

    slope = _mc_slope(estimate, exact, [1000, 10_000, 100_000, 1_000_000], range(20))
    assert -0.65 <= slope <= -0.35


def test_boundary_monte_carlo_rate():
    # h(x) = x1^2 on the unit-square boundary integrates to 1 + 2/3
    exact = 1.0 + 2.0 / 3.0

    def estimate(n, seed):
        pts, _ = sample_boundary(UNIT_SQUARE, n, seed)
        return UNIT_SQUARE.boundary_area * float(np.mean(pts[:, 0] ** 2))

    slope = _mc_slope(estimate, exact, [1000, 10_000, 100_000], range(20))
    assert -0.75 <= slope <= -0.25


def test_export_points_csv(tmp_path):
    pts, normals = sample_boundary(UNIT_SQUARE, 17, seed=1)
    path = tmp_path / "points.csv"
    export_points_csv(path, pts, normals)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,x2,n1,n2"
    assert len(lines) == 18
    first = [float(v) for v in lines[1].split(",")]
    assert np.allclose(first, np.concatenate([pts[0], normals[0]]), rtol=0, atol=0)
