"""Reverse-mode automatic differentiation on a tape of array-valued primitives.

The tape records a topologically ordered list of nodes whose values are
float64 numpy arrays.  The primitive set is deliberately small: it is exactly
what the loss assemblies need, including ``tanh_deriv`` as a first-class
primitive so that spatial derivatives of a tanh network can be propagated in
the forward pass and still be differentiated with respect to the parameters
in a single reverse sweep.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

PRIMITIVES = (
    "add",
    "sub",
    "mul",
    "scale",
    "matvec",
    "tanh",
    "tanh_deriv",
    "square",
    "sum",
    "sqrt_smoothed",
)


class TapeError(ValueError):
    pass


class Node:
    __slots__ = ("op", "inputs", "value", "aux", "is_param")

    def __init__(self, op, inputs, value, aux=None, is_param=False):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.aux = aux
        self.is_param = is_param


def _as_f64(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing over broadcast axes."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _left_to_right_sum(arr: np.ndarray) -> np.ndarray:
    # cumsum is a strict sequential scan, so its last entry is the
    # left-to-right total in row-major order (bit-reproducible).
    flat = arr.ravel()
    if flat.size == 0:
        raise TapeError("sum over an empty array")
    return np.asarray(np.cumsum(flat)[-1])


class Tape:
    """Single-writer record of primitives; values are cached at record time."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._tanh_of: dict[int, int] = {}
        self._tanh_deriv_of: dict[int, int] = {}

    # -- construction -----------------------------------------------------

    def leaf(self, value, is_param: bool = False) -> int:
        self.nodes.append(Node("leaf", (), _as_f64(value), is_param=is_param))
        return len(self.nodes) - 1

    def parameter(self, value) -> int:
        return self.leaf(value, is_param=True)

    def constant(self, value) -> int:
        return self.leaf(value, is_param=False)

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value

    def record(self, op: str, *inputs: int, aux=None) -> int:
        """Append a primitive node; its forward value is computed eagerly."""
        if op not in PRIMITIVES:
            raise TapeError(f"unknown primitive kind: {op!r}")
        n = len(self.nodes)
        for i in inputs:
            if not (0 <= i < n):
                raise TapeError(f"input node {i} does not exist on tape")
        value, extra = self._forward(op, inputs, aux)
        self.nodes.append(Node(op, inputs, value, aux=(aux, extra)))
        node_id = len(self.nodes) - 1
        if op == "tanh":
            self._tanh_of[inputs[0]] = node_id
        elif op == "tanh_deriv":
            self._tanh_deriv_of[inputs[0]] = node_id
        return node_id

    # -- forward ----------------------------------------------------------

    def _forward(self, op, inputs, aux):
        vals = [self.nodes[i].value for i in inputs]
        if op == "add":
            a, b = vals
            return a + b, None
        if op == "sub":
            a, b = vals
            return a - b, None
        if op == "mul":
            a, b = vals
            return a * b, None
        if op == "scale":
            (a,) = vals
            return float(aux) * a, None
        if op == "matvec":
            a, x = vals
            if a.ndim != 2 or x.ndim < 1 or a.shape[1] != x.shape[0]:
                raise TapeError(
                    f"matvec shape mismatch: {a.shape} @ {x.shape}"
                )
            if x.ndim == 2:
                return a @ x, None
            return np.tensordot(a, x, axes=1), None
        if op == "tanh":
            return np.tanh(vals[0]), None
        if op == "tanh_deriv":
            x_id = inputs[0]
            cached = self._tanh_of.get(x_id)
            if cached is not None:
                t = self.nodes[cached].value
            else:
                t = np.tanh(vals[0])
            return 1.0 - t * t, t
        if op == "square":
            a = vals[0]
            return a * a, None
        if op == "sum":
            return _left_to_right_sum(vals[0]), None
        if op == "sqrt_smoothed":
            eps = float(aux)
            if eps <= 0.0:
                raise TapeError("sqrt_smoothed requires eps > 0")
            return np.sqrt(vals[0] + eps * eps), None
        raise TapeError(f"unknown primitive kind: {op!r}")

    def replay(self) -> None:
        """Recompute every cached value in place from the leaves."""
        self._tanh_of = {}
        self._tanh_deriv_of = {}
        for node_id, node in enumerate(self.nodes):
            if node.op == "leaf":
                continue
            aux = node.aux[0] if isinstance(node.aux, tuple) else None
            node.value, extra = self._forward(node.op, node.inputs, aux)
            node.aux = (aux, extra)
            if node.op == "tanh":
                self._tanh_of[node.inputs[0]] = node_id
            elif node.op == "tanh_deriv":
                self._tanh_deriv_of[node.inputs[0]] = node_id

    # -- reverse ----------------------------------------------------------

    def backward(self, output: int) -> dict[int, np.ndarray]:
        """Adjoints of ``output`` with respect to every parameter leaf."""
        out = self.nodes[output]
        if out.value.ndim != 0:
            raise TapeError("backward requires a scalar output node")
        adj: list = [None] * len(self.nodes)
        adj[output] = np.ones(())
        grads: dict[int, np.ndarray] = {}
        for node_id in range(output, -1, -1):
            g = adj[node_id]
            if g is None:
                continue
            node = self.nodes[node_id]
            if node.op == "leaf":
                if node.is_param:
                    grads[node_id] = g
                continue
            self._push_adjoints(node, g, adj)
            adj[node_id] = None
        for node_id, node in enumerate(self.nodes):
            if node.is_param and node_id not in grads:
                grads[node_id] = np.zeros_like(node.value)
        return grads

    def _push_adjoints(self, node: Node, g, adj) -> None:
        op = node.op
        ins = node.inputs
        vals = [self.nodes[i].value for i in ins]

        def acc(i, contribution):
            if adj[i] is None:
                adj[i] = contribution
            else:
                adj[i] = adj[i] + contribution

        if op == "add":
            acc(ins[0], _unbroadcast(g, vals[0].shape))
            acc(ins[1], _unbroadcast(g, vals[1].shape))
        elif op == "sub":
            acc(ins[0], _unbroadcast(g, vals[0].shape))
            acc(ins[1], _unbroadcast(-g, vals[1].shape))
        elif op == "mul":
            acc(ins[0], _unbroadcast(g * vals[1], vals[0].shape))
            acc(ins[1], _unbroadcast(g * vals[0], vals[1].shape))
        elif op == "scale":
            acc(ins[0], float(node.aux[0]) * g)
        elif op == "matvec":
            a, x = vals
            ga = np.asarray(g)
            acc(ins[0], ga.reshape(a.shape[0], -1) @ x.reshape(x.shape[0], -1).T)
            if ga.ndim == 2:
                acc(ins[1], a.T @ ga)
            else:
                acc(ins[1], np.tensordot(a.T, ga, axes=1))
        elif op == "tanh":
            sib = self._tanh_deriv_of.get(ins[0])
            if sib is not None:
                acc(ins[0], g * self.nodes[sib].value)
            else:
                acc(ins[0], g * (1.0 - node.value * node.value))
        elif op == "tanh_deriv":
            t = node.aux[1]
            # d/dx (1 - tanh(x)^2) = -2 tanh(x) sech(x)^2
            acc(ins[0], -2.0 * (g * (t * node.value)))
        elif op == "square":
            acc(ins[0], 2.0 * (g * vals[0]))
        elif op == "sum":
            acc(ins[0], np.broadcast_to(g, vals[0].shape))
        elif op == "sqrt_smoothed":
            acc(ins[0], g * (0.5 / node.value))
        else:  # pragma: no cover
            raise TapeError(f"unknown primitive kind: {op!r}")


def check_gradient(
    f: Callable[[Sequence[np.ndarray]], tuple["Tape", int, list[int]]],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape adjoints and central finite differences.

    ``f`` builds a scalar tape from a list of parameter arrays and returns
    ``(tape, output_node, param_leaf_ids)`` with leaf ids ordered like
    ``params``.  The error for each scalar parameter entry is
    ``|adjoint - fd| / max(1, |adjoint|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [np.asarray(p, dtype=np.float64) for p in params]
    tape, out, leaf_ids = f(params)
    grads = tape.backward(out)
    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads[leaf_ids[k]]
        for j in range(p.size):
            orig = p.flat[j]
            p.flat[j] = orig + h
            tp, op_, _ = f(params)
            f_plus = float(tp.value(op_))
            p.flat[j] = orig - h
            tm, om_, _ = f(params)
            f_minus = float(tm.value(om_))
            p.flat[j] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("non-finite loss value at perturbed parameters")
            fd = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic.ravel()[j])
            worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst
