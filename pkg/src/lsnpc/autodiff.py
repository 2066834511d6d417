"""Dense float64 tensors with reverse-mode automatic differentiation.

Small by design: exactly the primitives needed for MLP encoders/decoders and
the variational losses (matmul, broadcasting elementwise arithmetic, GELU,
sigmoid, softplus, relu, log, exp, sqrt, square, lgamma, clamp, reductions,
concatenation).  No GPU, no fusion, no higher-order derivatives.

The programming model is a dynamic tape: every operation produces a
:class:`Tensor` that records its parents and a backward rule.  A
:class:`ComputeGraph` wraps a python callable of named tensors; evaluating it
retains the tape so gradients can be replayed in reverse topological order
with deterministic accumulation.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import special as _sp

from .special import digamma_array

__all__ = [
    "Tensor",
    "ComputeGraph",
    "eval_graph",
    "backward",
    "grad_check",
    "concat",
    "set_finite_checks",
]

_FINITE_CHECKS = True

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-operation non-finite detection; returns the previous value."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return np.reshape(grad, shape)


class Tensor:
    """A float64 array plus an optional gradient buffer of identical shape.

    Tensors are immutable after construction except for the gradient buffer.
    ``requires_grad`` marks optimizable leaves; interior nodes inherit the
    flag from their parents so backward can skip dead branches.
    """

    __slots__ = (
        "data",
        "grad",
        "requires_grad",
        "name",
        "nonfinite_op",
        "_op",
        "_parents",
        "_bwd",
    )

    # Make numpy defer mixed ndarray-Tensor arithmetic to the reflected
    # Tensor operators instead of building object arrays.
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _op: str = "leaf",
        _parents: tuple["Tensor", ...] = (),
        _bwd: Callable | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self.name = name
        self._op = _op
        self._parents = _parents
        self._bwd = _bwd
        self.nonfinite_op: str | None = None
        if _parents:
            for p in _parents:
                if p.nonfinite_op is not None:
                    self.nonfinite_op = p.nonfinite_op
                    break
        if (
            self.nonfinite_op is None
            and _FINITE_CHECKS
            and not np.all(np.isfinite(self.data))
        ):
            self.nonfinite_op = self._label()

    def _label(self) -> str:
        return self._op if self.name is None else f"{self._op}({self.name})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # ---- construction helpers -------------------------------------------

    @staticmethod
    def _lift(value) -> "Tensor":
        if isinstance(value, Tensor):
            return value
        return Tensor(value)

    def _binary(self, other, op: str, forward, bwd) -> "Tensor":
        other = Tensor._lift(other)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ValueError(
                f"{op}: operands {self._label()} {self.shape} and "
                f"{other._label()} {other.shape} do not broadcast"
            ) from None
        with np.errstate(all="ignore"):
            data = forward(self.data, other.data)
        return Tensor(data, _op=op, _parents=(self, other), _bwd=bwd)

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other):
        return self._binary(
            other,
            "add",
            np.add,
            lambda g, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(
            other,
            "sub",
            np.subtract,
            lambda g, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def __rsub__(self, other):
        return Tensor._lift(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(
            other,
            "mul",
            np.multiply,
            lambda g, a, b: (
                _unbroadcast(g * b, a.shape),
                _unbroadcast(g * a, b.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other,
            "div",
            np.divide,
            lambda g, a, b: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __rtruediv__(self, other):
        return Tensor._lift(other).__truediv__(self)

    def __neg__(self):
        return Tensor(
            -self.data, _op="neg", _parents=(self,), _bwd=lambda g, a: (-g,)
        )

    def __matmul__(self, other):
        other = Tensor._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError(
                f"matmul: expects 2-d operands, got {self.shape} @ {other.shape}"
            )
        if self.shape[1] != other.shape[0]:
            raise ValueError(
                f"matmul: inner dimensions differ for {self._label()} {self.shape} "
                f"@ {other._label()} {other.shape}"
            )
        return Tensor(
            self.data @ other.data,
            _op="matmul",
            _parents=(self, other),
            _bwd=lambda g, a, b: (g @ b.T, a.T @ g),
        )

    # ---- unary math ------------------------------------------------------

    def _unary(self, op: str, forward, bwd) -> "Tensor":
        with np.errstate(all="ignore"):
            data = forward(self.data)
        return Tensor(data, _op=op, _parents=(self,), _bwd=bwd)

    def identity(self):
        return self._unary("identity", lambda a: a.copy(), lambda g, a: (g,))

    def square(self):
        return self._unary("square", np.square, lambda g, a: (2.0 * a * g,))

    def sqrt(self):
        return self._unary(
            "sqrt", np.sqrt, lambda g, a: (0.5 * g / np.sqrt(a),)
        )

    def exp(self):
        return self._unary("exp", np.exp, lambda g, a: (np.exp(a) * g,))

    def log(self):
        return self._unary("log", np.log, lambda g, a: (g / a,))

    def sigmoid(self):
        return self._unary(
            "sigmoid",
            _sp.expit,
            lambda g, a: ((lambda s: s * (1.0 - s) * g)(_sp.expit(a)),),
        )

    def softplus(self):
        return self._unary(
            "softplus",
            lambda a: np.logaddexp(0.0, a),
            lambda g, a: (_sp.expit(a) * g,),
        )

    def relu(self):
        return self._unary(
            "relu",
            lambda a: np.maximum(a, 0.0),
            lambda g, a: ((a > 0.0) * g,),
        )

    def gelu(self):
        return self._unary(
            "gelu",
            lambda a: 0.5 * a * (1.0 + _sp.erf(a / _SQRT2)),
            lambda g, a: (
                (
                    0.5 * (1.0 + _sp.erf(a / _SQRT2))
                    + a * _INV_SQRT_2PI * np.exp(-0.5 * a * a)
                )
                * g,
            ),
        )

    def lgamma(self):
        return self._unary(
            "lgamma", _sp.gammaln, lambda g, a: (digamma_array(a) * g,)
        )

    def clamp(self, lo: float, hi: float):
        return self._unary(
            "clamp",
            lambda a: np.clip(a, lo, hi),
            lambda g, a: (((a > lo) & (a < hi)) * g,),
        )

    # ---- reductions ------------------------------------------------------

    def _reduce_bwd(self, grad, axis, keepdims):
        if axis is None:
            return np.broadcast_to(grad, self.shape)
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(a % self.data.ndim for a in axes)
            shape = tuple(
                1 if i in axes else s for i, s in enumerate(self.shape)
            )
            grad = np.reshape(grad, shape)
        return np.broadcast_to(grad, self.shape)

    def sum(self, axis=None, keepdims: bool = False):
        return Tensor(
            np.sum(self.data, axis=axis, keepdims=keepdims),
            _op="sum",
            _parents=(self,),
            _bwd=lambda g, a: (self._reduce_bwd(g, axis, keepdims),),
        )

    def mean(self, axis=None, keepdims: bool = False):
        count = self.size if axis is None else np.prod(
            [self.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return Tensor(
            np.mean(self.data, axis=axis, keepdims=keepdims),
            _op="mean",
            _parents=(self,),
            _bwd=lambda g, a: (self._reduce_bwd(g, axis, keepdims) / count,),
        )

    def __repr__(self):
        tag = self.name or self._op
        return f"Tensor({tag}, shape={self.shape})"


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``; gradient splits back."""
    tensors = tuple(Tensor._lift(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g, *arrays):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        _op="concat",
        _parents=tensors,
        _bwd=bwd,
    )


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative DFS topological order (parents before children)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


class ComputeGraph:
    """A differentiable function of named input tensors.

    ``fn`` receives a dict mapping names to Tensors (the bound parameters
    plus whatever ``eval_graph`` supplies) and returns the output Tensor.
    Evaluation retains the dynamic tape; ``backward`` replays it.  A graph
    instance must not be evaluated concurrently from several threads;
    distinct instances are independent.
    """

    def __init__(self, fn: Callable[[dict], Tensor], params: Mapping[str, Tensor] | None = None):
        self.fn = fn
        self.params: dict[str, Tensor] = dict(params or {})
        for name, p in self.params.items():
            p.requires_grad = True
            if p.name is None:
                p.name = name
        self.output: Tensor | None = None
        self._order: list[Tensor] | None = None

    def eval(self, inputs: Mapping[str, object] | None = None) -> Tensor:
        bound: dict[str, Tensor] = dict(self.params)
        for name, value in (inputs or {}).items():
            t = value if isinstance(value, Tensor) else Tensor(value, name=name)
            bound[name] = t
        out = self.fn(bound)
        if not isinstance(out, Tensor):
            out = Tensor(out)
        self.output = out
        self._order = None
        return out

    def nodes(self) -> list[Tensor]:
        """Topologically ordered node list of the last evaluation."""
        if self.output is None:
            raise RuntimeError("graph has not been evaluated")
        if self._order is None:
            self._order = _toposort(self.output)
        return self._order

    def backward(self, seed_grad=None) -> dict[str, np.ndarray]:
        if self.output is None:
            raise RuntimeError("backward called before forward evaluation")
        out = self.output
        if seed_grad is None:
            seed = np.ones_like(out.data)
        else:
            seed = np.asarray(
                seed_grad.data if isinstance(seed_grad, Tensor) else seed_grad,
                dtype=np.float64,
            )
            if seed.shape != out.data.shape:
                raise ValueError(
                    f"seed gradient shape {seed.shape} does not match output "
                    f"shape {out.data.shape}"
                )
        grads: dict[int, np.ndarray] = {id(out): seed}
        for node in reversed(self.nodes()):
            g = grads.get(id(node))
            if g is None or node._bwd is None:
                continue
            with np.errstate(all="ignore"):
                parent_grads = node._bwd(g, *(p.data for p in node._parents))
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        result: dict[str, np.ndarray] = {}
        for name, p in self.params.items():
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            p.grad = g if p.grad is None else p.grad + g
            result[name] = g
        return result


def eval_graph(graph: ComputeGraph, inputs: Mapping[str, object] | None = None) -> Tensor:
    """Evaluate ``graph`` on named inputs, retaining the tape for backward."""
    return graph.eval(inputs)


def backward(graph: ComputeGraph, seed_grad=None) -> dict[str, np.ndarray]:
    """Fill gradient buffers of the graph's parameters; returns them by name."""
    return graph.backward(seed_grad)


def grad_check(
    graph: ComputeGraph,
    inputs: Mapping[str, object] | None = None,
    step: float = 1e-5,
    sample: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The graph output must be scalar.  For parameters with more elements than
    ``sample``, a deterministic evenly spaced subset of coordinates is probed
    (pass ``sample=None`` to probe every coordinate).  The error metric is
    |analytic - numeric| / max(1, |numeric|), maximized over probed entries.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    out = graph.eval(inputs)
    if out.data.size != 1:
        raise ValueError(f"grad_check requires scalar output, got shape {out.shape}")
    for p in graph.params.values():
        p.zero_grad()
    graph.backward()
    analytic = {name: p.grad.copy() for name, p in graph.params.items()}
    worst = 0.0
    for name, p in graph.params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is not None and n > sample:
            idx = np.linspace(0, n - 1, sample).astype(int)
        else:
            idx = np.arange(n)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            hi = float(graph.eval(inputs).data)
            flat[i] = keep - step
            lo = float(graph.eval(inputs).data)
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * step)
            err = abs(analytic[name].reshape(-1)[i] - numeric) / max(
                1.0, abs(numeric)
            )
            worst = max(worst, err)
    graph.eval(inputs)
    return worst
