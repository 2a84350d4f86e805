"""Tanh multilayer perceptrons: construction, evaluation, assembly, projection.

A network of depth L applies L-1 tanh layers followed by an affine output
layer.  Evaluation is available both as plain numpy (for metrics and exports)
and recorded on a :class:`~condmix.tape.Tape` (for training), with identical
operation order so the two paths agree bit for bit.  The spatial Jacobian is
propagated analytically through the layers instead of by nested automatic
differentiation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tape import Tape


def _matmul(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    # sequential-contraction matmul: bitwise stable under block assembly,
    # unlike the BLAS kernels behind tensordot (used on the tape for speed)
    return np.einsum("ij,j...->i...", A, X, optimize=False)


def _stable_tanh(x: np.ndarray) -> np.ndarray:
    # pad to a SIMD-width multiple so no element takes the scalar tail path;
    # keeps tanh values independent of the array shape
    flat = x.ravel()
    pad = (-flat.size) % 16
    if pad == 0:
        return np.tanh(x)
    buf = np.zeros(flat.size + pad)
    buf[: flat.size] = flat
    return np.tanh(buf)[: flat.size].reshape(x.shape)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture: input dimension, hidden widths, output dimension.

    ``depth`` counts affine layers, so an empty ``layer_widths`` gives a
    purely affine map of depth 1.  ``weight_bound`` is recorded for reference
    but not enforced during optimization.
    """

    input_dim: int
    layer_widths: tuple[int, ...]
    output_dim: int
    weight_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("all hidden widths must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.layer_widths) + 1

    @property
    def width(self) -> int:
        return max((self.input_dim, self.output_dim) + self.layer_widths)

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim,) + self.layer_widths + (self.output_dim,)
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(r * c + r for r, c in self.layer_shapes())


@dataclass
class ParamSet:
    """Per-layer weight matrices and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def validate(self, spec: MlpSpec) -> None:
        shapes = spec.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("layer count does not match spec")
        for W, b, (rows, cols) in zip(self.weights, self.biases, shapes):
            if W.shape != (rows, cols) or b.shape != (rows,):
                raise ValueError(
                    f"parameter shapes {W.shape}/{b.shape} do not match spec {(rows, cols)}"
                )
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    def copy(self) -> "ParamSet":
        return ParamSet([W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class AdmissibleBounds:
    """Pointwise conductivity box 0 < c0 < c1."""

    c0: float
    c1: float

    def __post_init__(self):
        if not (0.0 < self.c0 < self.c1 < np.inf):
            raise ValueError(f"require 0 < c0 < c1 < inf, got ({self.c0}, {self.c1})")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.c0 + self.c1)


def init_params(spec: MlpSpec, seed: int, scheme: str = "glorot-uniform") -> ParamSet:
    """Glorot-uniform weights, zero biases; deterministic in ``seed`` (Philox)."""
    if scheme != "glorot-uniform":
        raise ValueError(f"unknown init scheme: {scheme!r}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    weights, biases = [], []
    for rows, cols in spec.layer_shapes():
        lim = np.sqrt(6.0 / (rows + cols))
        weights.append(rng.uniform(-lim, lim, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return ParamSet(weights, biases)


def flatten_params(params: ParamSet) -> np.ndarray:
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append(W.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten_params(spec: MlpSpec, vec: np.ndarray) -> ParamSet:
    weights, biases = [], []
    pos = 0
    for rows, cols in spec.layer_shapes():
        weights.append(vec[pos : pos + rows * cols].reshape(rows, cols).copy())
        pos += rows * cols
        biases.append(vec[pos : pos + rows].copy())
        pos += rows
    if pos != vec.size:
        raise ValueError(f"flat vector has {vec.size} entries, spec needs {pos}")
    return ParamSet(weights, biases)


# -- plain evaluation ------------------------------------------------------


def _forward_columns(params: ParamSet, cols: np.ndarray) -> np.ndarray:
    v = cols
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        v = _stable_tanh(_matmul(W, v) + b.reshape(-1, 1))
    return _matmul(params.weights[-1], v) + params.biases[-1].reshape(-1, 1)


def _forward_jac_columns(params: ParamSet, cols: np.ndarray):
    d = cols.shape[0]
    v = cols
    gs = [params.weights[0][:, i : i + 1] for i in range(d)]
    z = _matmul(params.weights[0], v) + params.biases[0].reshape(-1, 1)
    for layer in range(len(params.weights) - 1):
        if layer > 0:
            W = params.weights[layer]
            z = _matmul(W, v) + params.biases[layer].reshape(-1, 1)
            gs = [_matmul(W, g) for g in gs]
        t = _stable_tanh(z)
        s = 1.0 - t * t
        gs = [s * g for g in gs]
        v = t
    W = params.weights[-1]
    out = _matmul(W, v) + params.biases[-1].reshape(-1, 1)
    gs = [_matmul(W, g) for g in gs]
    return out, gs


def _affine_jac(params: ParamSet, d: int):
    gs = [params.weights[0][:, i : i + 1] for i in range(d)]
    return gs


def mlp_forward(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Network output at one point ``x`` of length ``input_dim``."""
    params.validate(spec)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({spec.input_dim},)")
    return _forward_columns(params, x.reshape(-1, 1))[:, 0]


def mlp_forward_batch(spec: MlpSpec, params: ParamSet, points: np.ndarray) -> np.ndarray:
    """Network outputs at ``points`` of shape (n, input_dim); returns (n, output_dim)."""
    params.validate(spec)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != spec.input_dim:
        raise ValueError(f"points have shape {pts.shape}, expected (n, {spec.input_dim})")
    return _forward_columns(params, pts.T.copy()).T


def mlp_forward_with_jacobian(spec: MlpSpec, params: ParamSet, x: np.ndarray):
    """Output and spatial Jacobian at one point: (output_dim,), (output_dim, input_dim)."""
    params.validate(spec)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({spec.input_dim},)")
    cols = x.reshape(-1, 1)
    if len(params.weights) == 1:
        out = _forward_columns(params, cols)
        gs = _affine_jac(params, spec.input_dim)
    else:
        out, gs = _forward_jac_columns(params, cols)
    jac = np.stack([g[:, 0] for g in gs], axis=1)
    return out[:, 0], jac


def mlp_forward_batch_with_jacobian(spec: MlpSpec, params: ParamSet, points: np.ndarray):
    """Batched output (n, output_dim) and Jacobians (n, output_dim, input_dim)."""
    params.validate(spec)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != spec.input_dim:
        raise ValueError(f"points have shape {pts.shape}, expected (n, {spec.input_dim})")
    cols = pts.T.copy()
    n = cols.shape[1]
    if len(params.weights) == 1:
        out = _forward_columns(params, cols)
        gs = [np.broadcast_to(g, (g.shape[0], n)) for g in _affine_jac(params, spec.input_dim)]
    else:
        out, gs = _forward_jac_columns(params, cols)
        gs = [np.broadcast_to(g, (g.shape[0], n)) for g in gs]
    jac = np.stack(gs, axis=2)  # (output_dim, n, d) -> transpose below
    return out.T, np.transpose(jac, (1, 0, 2))


# -- on-tape evaluation ----------------------------------------------------


@dataclass(frozen=True)
class NetEval:
    """Node ids of one network evaluation: value (d_L, n) and, when requested,
    the spatial derivative in each input direction (each (d_L, n))."""

    value: int
    input_grad: tuple[int, ...] = ()


class TapeNet:
    """An MLP bound to parameter leaves on a tape.

    The same leaves serve every evaluation of the network on that tape, so
    interior and boundary residuals share one gradient.
    """

    def __init__(self, tape: Tape, spec: MlpSpec, params: ParamSet):
        params.validate(spec)
        self.tape = tape
        self.spec = spec
        self.weight_ids = [tape.parameter(W) for W in params.weights]
        self.bias_ids = [tape.parameter(b.reshape(-1, 1)) for b in params.biases]

    def forward(self, points: np.ndarray, jacobian: bool = False) -> NetEval:
        tape, spec = self.tape, self.spec
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != spec.input_dim:
            raise ValueError(f"points have shape {pts.shape}, expected (n, {spec.input_dim})")
        d = spec.input_dim
        v = tape.constant(pts.T.copy())
        gs: list[int] = []
        if jacobian:
            eye = np.eye(d)
            dirs = [tape.constant(eye[:, i : i + 1]) for i in range(d)]
            gs = [tape.record("matvec", self.weight_ids[0], dirs[i]) for i in range(d)]
        n_layers = len(self.weight_ids)
        for layer in range(n_layers - 1):
            z = tape.record(
                "add",
                tape.record("matvec", self.weight_ids[layer], v),
                self.bias_ids[layer],
            )
            v = tape.record("tanh", z)
            if jacobian:
                s = tape.record("tanh_deriv", z)
                if layer > 0:
                    gs = [tape.record("matvec", self.weight_ids[layer], g) for g in gs]
                gs = [tape.record("mul", s, g) for g in gs]
        out = tape.record(
            "add",
            tape.record("matvec", self.weight_ids[-1], v),
            self.bias_ids[-1],
        )
        if jacobian:
            if n_layers > 1:
                gs = [tape.record("matvec", self.weight_ids[-1], g) for g in gs]
            n = pts.shape[0]
            if n > 1:
                # affine nets carry point-independent (d_L, 1) derivative
                # columns; expand so per-point reductions see every point
                ones = None
                expanded = []
                for g in gs:
                    if tape.value(g).shape[1] == 1:
                        if ones is None:
                            ones = tape.constant(np.ones((1, n)))
                        g = tape.record("mul", g, ones)
                    expanded.append(g)
                gs = expanded
            return NetEval(value=out, input_grad=tuple(gs))
        return NetEval(value=out)

    def gradient(self, adjoints: dict[int, np.ndarray]) -> np.ndarray:
        """Assemble the flat gradient vector in ``flatten_params`` order."""
        parts = []
        for wid, bid in zip(self.weight_ids, self.bias_ids):
            parts.append(adjoints[wid].ravel())
            parts.append(adjoints[bid].ravel())
        return np.concatenate(parts)


# -- assembly and projection -------------------------------------------------


def parallelize(p1: tuple[MlpSpec, ParamSet], p2: tuple[MlpSpec, ParamSet]):
    """Assemble two networks of equal depth and input dimension into one whose
    output is the concatenation of the two outputs (block-diagonal weights)."""
    spec1, params1 = p1
    spec2, params2 = p2
    params1.validate(spec1)
    params2.validate(spec2)
    if spec1.depth != spec2.depth:
        raise ValueError("parallelize requires equal depth")
    if spec1.input_dim != spec2.input_dim:
        raise ValueError("parallelize requires equal input dimension")
    widths = tuple(w1 + w2 for w1, w2 in zip(spec1.layer_widths, spec2.layer_widths))
    spec = MlpSpec(spec1.input_dim, widths, spec1.output_dim + spec2.output_dim)
    weights, biases = [], []
    for layer, (W1, W2) in enumerate(zip(params1.weights, params2.weights)):
        if layer == 0:
            W = np.vstack([W1, W2])
        else:
            W = np.zeros((W1.shape[0] + W2.shape[0], W1.shape[1] + W2.shape[1]))
            W[: W1.shape[0], : W1.shape[1]] = W1
            W[W1.shape[0] :, W1.shape[1] :] = W2
        weights.append(W)
        biases.append(np.concatenate([params1.biases[layer], params2.biases[layer]]))
    return spec, ParamSet(weights, biases)


def project_admissible(v, bounds: AdmissibleBounds):
    """Clamp into [c0, c1]; the mask (1 strictly inside, else 0) is the
    sub-derivative used by the reverse pass."""
    arr = np.asarray(v, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("project_admissible requires finite input")
    clamped = np.clip(arr, bounds.c0, bounds.c1)
    mask = ((arr > bounds.c0) & (arr < bounds.c1)).astype(np.float64)
    if np.isscalar(v) or np.asarray(v).ndim == 0:
        return float(clamped), float(mask)
    return clamped, mask


# -- serialization -----------------------------------------------------------


def save_params(path, spec: MlpSpec, params: ParamSet) -> None:
    """JSON checkpoint: layer-shape header plus one flat parameter list
    (per layer: weight rows in C order, then the bias)."""
    params.validate(spec)
    payload = {
        "input_dim": spec.input_dim,
        "layer_widths": list(spec.layer_widths),
        "output_dim": spec.output_dim,
        "weight_bound": spec.weight_bound,
        "theta": flatten_params(params).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_params(path) -> tuple[MlpSpec, ParamSet]:
    with open(path) as fh:
        payload = json.load(fh)
    spec = MlpSpec(
        payload["input_dim"],
        tuple(payload["layer_widths"]),
        payload["output_dim"],
        payload.get("weight_bound"),
    )
    return spec, unflatten_params(spec, np.asarray(payload["theta"], dtype=np.float64))
