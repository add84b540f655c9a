"""A small reverse-mode differentiation engine over float64 numpy arrays.

Graphs are built eagerly: every op computes its value as soon as it is
added, and is also recorded so that the whole graph can be replayed with new
leaf values (``Graph.evaluate``). Random ops (Gaussian noise, dropout) draw
from a generator seeded per graph; replay re-seeds it, so masks and noise
are identical on every evaluation of the same graph.

    g = Graph(seed=0)
    x = g.input("x", [1.0, 2.0])
    y = g.output("y", x + x)
    g.evaluate({"x": [3.0, 4.0]})["y"]   # array([6., 8.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np


class GraphError(ValueError):
    pass


class ShapeError(GraphError):
    pass


class NonFiniteError(GraphError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a} with {b}") from None


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x, axis=-1):
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


# Each op: forward(inputs, attrs, rng) -> value; backward(g, inputs, out, attrs) -> grads
# per input (None for inputs that receive no gradient).


def _add_fwd(xs, a, rng):
    _broadcast_shape(xs[0].shape, xs[1].shape)
    return xs[0] + xs[1]


def _add_bwd(g, xs, out, a):
    return _unbroadcast(g, xs[0].shape), _unbroadcast(g, xs[1].shape)


def _sub_fwd(xs, a, rng):
    _broadcast_shape(xs[0].shape, xs[1].shape)
    return xs[0] - xs[1]


def _sub_bwd(g, xs, out, a):
    return _unbroadcast(g, xs[0].shape), -_unbroadcast(g, xs[1].shape)


def _mul_fwd(xs, a, rng):
    _broadcast_shape(xs[0].shape, xs[1].shape)
    return xs[0] * xs[1]


def _mul_bwd(g, xs, out, a):
    return _unbroadcast(g * xs[1], xs[0].shape), _unbroadcast(g * xs[0], xs[1].shape)


def _div_fwd(xs, a, rng):
    _broadcast_shape(xs[0].shape, xs[1].shape)
    return xs[0] / xs[1]


def _div_bwd(g, xs, out, a):
    return (
        _unbroadcast(g / xs[1], xs[0].shape),
        _unbroadcast(-g * xs[0] / xs[1] ** 2, xs[1].shape),
    )


def _scale_fwd(xs, a, rng):
    return xs[0] * a["c"]


def _scale_bwd(g, xs, out, a):
    return (g * a["c"],)


def _matmul_fwd(xs, a, rng):
    x, w = xs
    if x.ndim == 0 or w.ndim == 0 or x.shape[-1] != w.shape[0] or w.ndim > 2:
        raise ShapeError(f"matmul of {x.shape} by {w.shape}")
    return x @ w


def _matmul_bwd(g, xs, out, a):
    x, w = xs
    if x.ndim == 1 and w.ndim == 1:
        return g * w, g * x
    if x.ndim == 1:
        return w @ g, np.outer(x, g)
    if w.ndim == 1:
        return np.outer(g, w), x.T @ g
    return g @ w.T, x.T @ g


def _tanh_fwd(xs, a, rng):
    return np.tanh(xs[0])


def _tanh_bwd(g, xs, out, a):
    return (g * (1.0 - out * out),)


def _sigmoid_fwd(xs, a, rng):
    return _sigmoid(xs[0])


def _sigmoid_bwd(g, xs, out, a):
    return (g * out * (1.0 - out),)


def _exp_fwd(xs, a, rng):
    return np.exp(xs[0])


def _exp_bwd(g, xs, out, a):
    return (g * out,)


def _log_fwd(xs, a, rng):
    return np.log(xs[0])


def _log_bwd(g, xs, out, a):
    return (g / xs[0],)


def _softmax_fwd(xs, a, rng):
    return _softmax(xs[0], a["axis"])


def _softmax_bwd(g, xs, out, a):
    dot = (g * out).sum(axis=a["axis"], keepdims=True)
    return (out * (g - dot),)


def _clip_fwd(xs, a, rng):
    return np.clip(xs[0], a["lo"], a["hi"])


def _clip_bwd(g, xs, out, a):
    x = xs[0]
    return (g * ((x >= a["lo"]) & (x <= a["hi"])),)


def _sum_fwd(xs, a, rng):
    return np.sum(xs[0], axis=a["axis"])


def _sum_bwd(g, xs, out, a):
    x = xs[0]
    if a["axis"] is not None:
        g = np.expand_dims(g, a["axis"])
    return (np.broadcast_to(g, x.shape).copy(),)


def _mean_fwd(xs, a, rng):
    return np.mean(xs[0], axis=a["axis"])


def _mean_bwd(g, xs, out, a):
    x = xs[0]
    n = x.size if a["axis"] is None else x.shape[a["axis"]]
    if a["axis"] is not None:
        g = np.expand_dims(g, a["axis"])
    return (np.broadcast_to(g / n, x.shape).copy(),)


def _index_fwd(xs, a, rng):
    try:
        return np.array(xs[0][a["key"]], dtype=np.float64)
    except IndexError as exc:
        raise ShapeError(str(exc)) from None


def _index_bwd(g, xs, out, a):
    gx = np.zeros_like(xs[0])
    np.add.at(gx, a["key"], g)
    return (gx,)


def _concat_fwd(xs, a, rng):
    try:
        return np.concatenate(xs, axis=a["axis"])
    except ValueError as exc:
        raise ShapeError(str(exc)) from None


def _concat_bwd(g, xs, out, a):
    bounds = np.cumsum([x.shape[a["axis"]] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=a["axis"]))


def _stack_fwd(xs, a, rng):
    try:
        return np.stack(xs, axis=0)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None


def _stack_bwd(g, xs, out, a):
    return tuple(g[i] for i in range(len(xs)))


def _reshape_fwd(xs, a, rng):
    try:
        return xs[0].reshape(a["shape"])
    except ValueError as exc:
        raise ShapeError(str(exc)) from None


def _reshape_bwd(g, xs, out, a):
    return (g.reshape(xs[0].shape),)


def _transpose_fwd(xs, a, rng):
    return xs[0].T


def _transpose_bwd(g, xs, out, a):
    return (g.T,)


def _noise_fwd(xs, a, rng):
    x = xs[0]
    if a["sigma"] == 0:
        return x.copy()
    a["noise"] = a["sigma"] * rng.standard_normal(x.shape)
    return x + a["noise"]


def _noise_bwd(g, xs, out, a):
    return (g,)


def _dropout_fwd(xs, a, rng):
    x = xs[0]
    p = a["p"]
    if p == 0:
        a["mask"] = np.ones_like(x)
    else:
        a["mask"] = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * a["mask"]


def _dropout_bwd(g, xs, out, a):
    return (g * a["mask"],)


def _lstm_seq_fwd(xs, a, rng):
    # xs: per-step input projections (N x 4L), recurrent weights U (L x 4L)
    zx, U = xs
    N = zx.shape[0]
    L = U.shape[0]
    if zx.ndim != 2 or U.shape != (L, 4 * L) or zx.shape[1] != 4 * L:
        raise ShapeError(f"lstm over {zx.shape} with recurrent weights {U.shape}")
    order = range(N - 1, -1, -1) if a["reverse"] else range(N)
    out = np.empty((N, L))
    h = np.zeros(L)
    c = np.zeros(L)
    cache = []
    for t in order:
        z = zx[t] + h @ U
        s = _sigmoid(z)
        i, f, o = s[:L], s[L : 2 * L], s[3 * L :]
        g = np.tanh(z[2 * L : 3 * L])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        out[t] = h
        cache.append((t, i, f, g, o, c_prev, h_prev, tc))
    a["cache"] = cache
    return out


def _lstm_seq_bwd(gout, xs, out, a):
    zx, U = xs
    L = U.shape[0]
    dzx = np.zeros_like(zx)
    dU = np.zeros_like(U)
    dh_next = np.zeros(L)
    dc_next = np.zeros(L)
    dz = np.empty(4 * L)
    for t, i, f, g, o, c_prev, h_prev, tc in reversed(a["cache"]):
        dh = gout[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[:L] = dc * g * i * (1.0 - i)
        dz[L : 2 * L] = dc * c_prev * f * (1.0 - f)
        dz[2 * L : 3 * L] = dc * i * (1.0 - g * g)
        dz[3 * L :] = dh * tc * o * (1.0 - o)
        dzx[t] = dz
        dU += np.outer(h_prev, dz)
        dh_next = U @ dz
        dc_next = dc * f
    return dzx, dU


OPS: dict[str, tuple[Callable, Callable]] = {
    "lstm_seq": (_lstm_seq_fwd, _lstm_seq_bwd),
    "add": (_add_fwd, _add_bwd),
    "sub": (_sub_fwd, _sub_bwd),
    "mul": (_mul_fwd, _mul_bwd),
    "div": (_div_fwd, _div_bwd),
    "scale": (_scale_fwd, _scale_bwd),
    "matmul": (_matmul_fwd, _matmul_bwd),
    "tanh": (_tanh_fwd, _tanh_bwd),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd),
    "exp": (_exp_fwd, _exp_bwd),
    "log": (_log_fwd, _log_bwd),
    "softmax": (_softmax_fwd, _softmax_bwd),
    "clip": (_clip_fwd, _clip_bwd),
    "sum": (_sum_fwd, _sum_bwd),
    "mean": (_mean_fwd, _mean_bwd),
    "index": (_index_fwd, _index_bwd),
    "concat": (_concat_fwd, _concat_bwd),
    "stack": (_stack_fwd, _stack_bwd),
    "reshape": (_reshape_fwd, _reshape_bwd),
    "transpose": (_transpose_fwd, _transpose_bwd),
    "noise": (_noise_fwd, _noise_bwd),
    "dropout": (_dropout_fwd, _dropout_bwd),
}

LEAF_KINDS = ("input", "param", "const")


class Node:
    """Handle to one recorded value in a :class:`Graph`."""

    __slots__ = ("graph", "id", "op", "inputs", "attrs", "value", "name")

    def __init__(self, graph, id, op, inputs, attrs, value, name=None):
        self.graph = graph
        self.id = id
        self.op = op
        self.inputs = inputs
        self.attrs = attrs
        self.value = value
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node #{self.id} {self.op}{label} shape={self.shape}>"

    def _lift(self, other):
        return other if isinstance(other, Node) else self.graph.const(other)

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    def __radd__(self, other):
        return self.graph.add(self._lift(other), self)

    def __sub__(self, other):
        return self.graph.sub(self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.sub(self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.scale(self, other)
        return self.graph.mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.scale(self, 1.0 / other)
        return self.graph.div(self, self._lift(other))

    def __neg__(self):
        return self.graph.scale(self, -1.0)

    def __matmul__(self, other):
        return self.graph.matmul(self, self._lift(other))

    def __getitem__(self, key):
        return self.graph.index(self, key)

    @property
    def T(self):
        return self.graph.transpose(self)


class Graph:
    """Recorded computation with eager forward values."""

    def __init__(self, seed: int = 0, check_finite: bool = True):
        self.seed = seed
        self.check_finite = check_finite
        self.nodes: list[Node] = []
        self.names: dict[str, Node] = {}
        self.outputs: dict[str, Node] = {}
        self.rng = np.random.default_rng(seed)

    # leaves ---------------------------------------------------------------

    def _leaf(self, kind, name, value) -> Node:
        value = np.array(value, dtype=np.float64)
        if name is not None and name in self.names:
            raise GraphError(f"duplicate node name {name!r}")
        node = Node(self, len(self.nodes), kind, (), None, value, name)
        self._check(node)
        self.nodes.append(node)
        if name is not None:
            self.names[name] = node
        return node

    def input(self, name: str, value) -> Node:
        return self._leaf("input", name, value)

    def param(self, name: str, value) -> Node:
        return self._leaf("param", name, value)

    def const(self, value, name: Optional[str] = None) -> Node:
        return self._leaf("const", name, value)

    def output(self, name: str, node: Node) -> Node:
        self.outputs[name] = node
        return node

    def params(self) -> list[Node]:
        return [n for n in self.nodes if n.op == "param"]

    # ops ------------------------------------------------------------------

    def _check(self, node: Node):
        if self.check_finite and not np.all(np.isfinite(node.value)):
            label = node.name or f"#{node.id}"
            raise NonFiniteError(f"non-finite value at node {label} ({node.op})")

    def apply(self, op: str, *inputs: Node, **attrs) -> Node:
        for x in inputs:
            if x.graph is not self:
                raise GraphError("inputs belong to a different graph")
        node = Node(self, len(self.nodes), op, inputs, attrs, None)
        node.value = self._forward(node)
        self.nodes.append(node)
        return node

    def _forward(self, node: Node) -> np.ndarray:
        fwd = OPS[node.op][0]
        try:
            # non-finite results are reported by _check with the node's name
            with np.errstate(all="ignore"):
                value = fwd([x.value for x in node.inputs], node.attrs, self.rng)
        except ShapeError as exc:
            raise ShapeError(f"node #{node.id} ({node.op}): {exc}") from None
        node.value = np.asarray(value, dtype=np.float64)
        self._check(node)
        return node.value

    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul", a, b)

    def div(self, a, b):
        return self.apply("div", a, b)

    def scale(self, a, c: float):
        return self.apply("scale", a, c=float(c))

    def matmul(self, a, b):
        return self.apply("matmul", a, b)

    def tanh(self, a):
        return self.apply("tanh", a)

    def sigmoid(self, a):
        return self.apply("sigmoid", a)

    def exp(self, a):
        return self.apply("exp", a)

    def log(self, a):
        return self.apply("log", a)

    def softmax(self, a, axis: int = -1):
        return self.apply("softmax", a, axis=axis)

    def clip(self, a, lo: float, hi: float):
        return self.apply("clip", a, lo=lo, hi=hi)

    def sum(self, a, axis=None):
        return self.apply("sum", a, axis=axis)

    def mean(self, a, axis=None):
        return self.apply("mean", a, axis=axis)

    def index(self, a, key):
        return self.apply("index", a, key=key)

    def concat(self, nodes: Sequence[Node], axis: int = 0):
        return self.apply("concat", *nodes, axis=axis)

    def stack(self, nodes: Sequence[Node]):
        return self.apply("stack", *nodes)

    def reshape(self, a, shape):
        return self.apply("reshape", a, shape=tuple(shape))

    def transpose(self, a):
        return self.apply("transpose", a)

    def gaussian_noise(self, a, sigma: float):
        return self.apply("noise", a, sigma=float(sigma))

    def lstm_sequence(self, zx, U, reverse: bool = False):
        """Run an LSTM over precomputed input projections ``zx`` (N x 4L).

        Same cell as a step-by-step composition of primitives, fused into one
        node with its own backpropagation-through-time.
        """
        return self.apply("lstm_seq", zx, U, reverse=bool(reverse))

    def dropout(self, a, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        return self.apply("dropout", a, p=float(p))

    # evaluation -----------------------------------------------------------

    def evaluate(self, inputs: Optional[Mapping[str, object]] = None) -> dict[str, np.ndarray]:
        """Replay the graph with rebound leaves; returns every named value."""
        for name, value in (inputs or {}).items():
            node = self.names.get(name)
            if node is None or node.op not in LEAF_KINDS:
                raise GraphError(f"no leaf named {name!r}")
            value = np.array(value, dtype=np.float64)
            if value.shape != node.value.shape:
                raise ShapeError(f"leaf {name!r}: expected shape {node.value.shape}, got {value.shape}")
            node.value = value
            self._check(node)
        self.rng = np.random.default_rng(self.seed)
        for node in self.nodes:
            if node.op not in LEAF_KINDS:
                self._forward(node)
        out = {name: node.value for name, node in self.names.items()}
        out.update({name: node.value for name, node in self.outputs.items()})
        return out

    def gradients(self, output: Node, wrt: Optional[Iterable] = None) -> dict:
        """Reverse-mode derivatives of scalar ``output``.

        ``wrt`` may hold nodes or leaf names; by default all parameters. The
        result is keyed by node name (or the node itself when unnamed).
        """
        if output.value.shape != ():
            raise ShapeError(f"gradient output must be scalar, got shape {output.value.shape}")
        if wrt is None:
            targets = self.params()
        else:
            targets = [self.names[w] if isinstance(w, str) else w for w in wrt]
        adj: dict[int, np.ndarray] = {output.id: np.ones(())}
        for node in reversed(self.nodes[: output.id + 1]):
            g = adj.pop(node.id, None) if node.op not in LEAF_KINDS else adj.get(node.id)
            if g is None or node.op in LEAF_KINDS:
                continue
            grads = OPS[node.op][1](g, [x.value for x in node.inputs], node.value, node.attrs)
            for x, gx in zip(node.inputs, grads):
                if gx is None:
                    continue
                if x.id in adj:
                    adj[x.id] = adj[x.id] + gx
                else:
                    adj[x.id] = gx
        result = {}
        for t in targets:
            g = adj.get(t.id)
            result[t.name if t.name is not None else t] = (
                np.zeros_like(t.value) if g is None else np.array(g, dtype=np.float64).reshape(t.value.shape)
            )
        return result


def evaluate(graph: Graph, inputs: Optional[Mapping[str, object]] = None) -> dict[str, np.ndarray]:
    return graph.evaluate(inputs)


def gradients(graph: Graph, output: Node, wrt: Optional[Iterable] = None) -> dict:
    return graph.gradients(output, wrt)


def relative_error(g_ad, g_fd):
    g_ad = np.asarray(g_ad)
    g_fd = np.asarray(g_fd)
    return np.abs(g_ad - g_fd) / np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def failures(self) -> list[str]:
        return [name for name, err in self.errors.items() if err >= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = [f"{name}\t{err:.3e}\t{'FAIL' if err >= self.tolerance else 'ok'}" for name, err in self.errors.items()]
        out.append(f"max relative error {self.max_error:.3e} (tolerance {self.tolerance:g})")
        return out


# (offset in units of h, weight); derivative = sum(weight * f) / h
STENCILS = {
    2: ((1.0, 0.5), (-1.0, -0.5)),
    4: ((1.0, 8.0 / 12), (-1.0, -8.0 / 12), (2.0, -1.0 / 12), (-2.0, 1.0 / 12)),
}


def check_gradients(
    graph: Graph,
    output: Optional[Node] = None,
    inputs: Optional[Mapping[str, object]] = None,
    tolerance: float = 1e-4,
    eps: float = 1e-5,
    wrt: Optional[Iterable] = None,
    points: int = 2,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences.

    ``output`` defaults to the graph's single registered output. Every
    parameter (or each node in ``wrt``) is perturbed element by element; the
    graph is replayed, so random nodes reuse their masks.

    ``points=2`` is the plain ``(f(x+h) - f(x-h)) / 2h`` stencil. ``points=4``
    uses ``(8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h``, whose O(h^4)
    truncation error allows a larger ``h`` and so far less roundoff.
    """
    if points not in STENCILS:
        raise ValueError(f"points must be one of {sorted(STENCILS)}")
    stencil = STENCILS[points]
    if output is None:
        if len(graph.outputs) != 1:
            raise GraphError("pass the scalar output explicitly")
        output = next(iter(graph.outputs.values()))
    graph.evaluate(inputs)
    targets = graph.params() if wrt is None else [graph.names[w] if isinstance(w, str) else w for w in wrt]
    analytic = graph.gradients(output, targets)
    report = GradCheckReport(tolerance)
    for node in targets:
        key = node.name if node.name is not None else node
        base = node.value.copy()
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            total = 0.0
            for step, weight in stencil:
                node.value = base.copy()
                node.value[idx] += step * eps
                graph.evaluate()
                total += weight * float(output.value)
            numeric[idx] = total / eps
        node.value = base
        graph.evaluate()
        err = relative_error(analytic[key], numeric)
        report.errors[node.name or f"#{node.id}"] = float(err.max()) if err.size else 0.0
    return report
