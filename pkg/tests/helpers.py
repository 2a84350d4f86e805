"""Shared constructions for the loss and acceptance tests."""

import numpy as np

from condmix.geometry import BoxDomain, CollocationSet, sample_boundary, sample_interior
from condmix.network import AdmissibleBounds, MlpSpec, ParamSet, init_params
from condmix.problems import ObservationField, ProblemInstance


def constant_net(input_dim, values, widths=(4,)):
    """Zero weights everywhere, final bias = values: the network is constant."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    spec = MlpSpec(input_dim, widths, values.size)
    weights = [np.zeros(s) for s in spec.layer_shapes()]
    biases = [np.zeros(s[0]) for s in spec.layer_shapes()]
    biases[-1][:] = values
    return spec, ParamSet(weights, biases)


def affine_net(matrix, bias=None):
    """Depth-1 network realizing x -> A x + b."""
    A = np.asarray(matrix, dtype=np.float64)
    b = np.zeros(A.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    spec = MlpSpec(A.shape[1], (), A.shape[0])
    return spec, ParamSet([A.copy()], [b.copy()])


def small_random_nets(dim, seed, widths=(4,), q_mid=1.5, scale=0.2):
    """A small q/sigma pair with the conductivity centered inside the box."""
    q_spec = MlpSpec(dim, widths, 1)
    s_spec = MlpSpec(dim, widths, dim)
    rng = np.random.Generator(np.random.Philox(seed))
    q_params = init_params(q_spec, seed)
    s_params = init_params(s_spec, seed + 1)
    for p in (q_params, s_params):
        for W in p.weights:
            W *= scale / max(1e-12, np.max(np.abs(W)))
        for b in p.biases:
            b[:] = scale * rng.normal(size=b.shape) * 0.1
    q_params.biases[-1][:] = q_mid
    return (q_spec, q_params), (s_spec, s_params)


def constant_q_linear_u_instance(q0=2.0, grad=(1.0, 2.0)):
    """Constant conductivity, linear solution, zero source: every mixed-system
    residual vanishes at the hand-constructed exact parameters."""
    grad = np.asarray(grad, dtype=np.float64)
    domain = BoxDomain((0.0, 0.0), (1.0, 1.0))

    def q_true(pts):
        return np.full(pts.shape[0], q0)

    def u_true(pts):
        return pts @ grad

    def grad_u(pts):
        return np.tile(grad, (pts.shape[0], 1))

    def source(pts):
        return np.zeros(pts.shape[0])

    def flux(pts, normals):
        return q0 * (normals @ grad)

    return ProblemInstance(
        id="const-linear",
        dim=2,
        domain=domain,
        bc_kind="neumann",
        bounds=AdmissibleBounds(1.0, 3.0),
        q_true=q_true,
        source=source,
        u_true=u_true,
        grad_u_true=grad_u,
        flux_bc=flux,
    )


def tiny_collocation(problem, n_r=16, n_b=8, n_data=None, seed=100):
    interior = sample_interior(problem.domain, n_r, seed)
    boundary, normals = sample_boundary(problem.domain, n_b, seed + 1)
    data_points = None
    if problem.data_region is not None:
        from condmix.geometry import sample_subdomain

        data_points = sample_subdomain(
            problem.domain, problem.data_region, n_data or n_r, seed + 2
        )
    return CollocationSet(interior, boundary, normals, data_points)


def exact_observation(problem, points):
    return ObservationField(
        points=points,
        grad_z=problem.grad_u_true(points),
        delta=0.0,
        noise_seed=0,
        scale=float(np.max(np.abs(problem.grad_u_true(points)))),
    )


def observation_at(points, grad_z):
    grad_z = np.asarray(grad_z, dtype=np.float64)
    return ObservationField(
        points=np.asarray(points, dtype=np.float64),
        grad_z=grad_z,
        delta=0.0,
        noise_seed=0,
        scale=float(np.max(np.abs(grad_z))) if grad_z.size else 0.0,
    )
