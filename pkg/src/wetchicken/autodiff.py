"""Reverse-mode automatic differentiation over numpy float64 arrays.

A :class:`Tensor` wraps an ``np.ndarray`` together with an optional gradient
and a backward closure. Operations build a tape implicitly through parent
links; ``Tensor.backward()`` runs an iterative topological sort and
accumulates gradients into every reachable tensor with
``requires_grad=True``. Sub-graphs that cannot influence a gradient are
never recorded, so frozen model parameters cost nothing during policy
rollouts.

Only what the package needs is implemented: broadcasting elementwise
arithmetic, matmul, reductions, indexing, shape ops, a handful of
nonlinearities, Cholesky and triangular solves (with their matrix-calculus
VJPs), and the ARD squared-exponential Gram matrix as a fused primitive
dispatching to :mod:`wetchicken.accel`.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular as _scipy_solve_triangular

from . import accel
from .errors import ContractViolation

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "stack",
    "where",
    "maximum",
    "diag_embed",
    "ard_kernel",
    "cholesky",
    "solve_triangular",
]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """An array with an optional gradient and a place on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def backward(self) -> None:
        """Backpropagate from a scalar-valued tensor."""
        if self.data.size != 1:
            raise ContractViolation(
                f"backward() needs a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _result(np.add(self.data, other.data), (self, other))
        if out.requires_grad:

            def backward():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(out.grad, other.data.shape))

            out._backward = backward
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out = _result(np.multiply(self.data, other.data), (self, other))
        if out.requires_grad:

            def backward():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(out.grad * self.data, other.data.shape))

            out._backward = backward
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = _result(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out = _result(np.divide(self.data, other.data), (self, other))
        if out.requires_grad:

            def backward():
                if self.requires_grad:
                    self._accum(
                        _unbroadcast(out.grad / other.data, self.data.shape)
                    )
                if other.requires_grad:
                    other._accum(
                        _unbroadcast(
                            -out.grad * self.data / (other.data * other.data),
                            other.data.shape,
                        )
                    )

            out._backward = backward
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise ContractViolation("only scalar exponents are supported")
        out = _result(self.data**p, (self,))
        if out.requires_grad:

            def backward():
                self._accum(out.grad * p * self.data ** (p - 1))

            out._backward = backward
        return out

    # -- matmul ---------------------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        out = _result(a @ b, (self, other))
        if out.requires_grad:

            def backward():
                g = out.grad
                if a.ndim == 2 and b.ndim == 2:
                    if self.requires_grad:
                        self._accum(g @ b.T)
                    if other.requires_grad:
                        other._accum(a.T @ g)
                elif a.ndim == 2 and b.ndim == 1:
                    if self.requires_grad:
                        self._accum(np.outer(g, b))
                    if other.requires_grad:
                        other._accum(a.T @ g)
                elif a.ndim == 1 and b.ndim == 2:
                    if self.requires_grad:
                        self._accum(b @ g)
                    if other.requires_grad:
                        other._accum(np.outer(a, g))
                elif a.ndim == 1 and b.ndim == 1:
                    if self.requires_grad:
                        self._accum(g * b)
                    if other.requires_grad:
                        other._accum(g * a)
                else:
                    raise ContractViolation(
                        f"matmul backward unsupported for {a.ndim}D @ {b.ndim}D"
                    )

            out._backward = backward
        return out

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = _result(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:

            def backward():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape))

            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape ops --------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _result(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.reshape(self.data.shape))
        return out

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ContractViolation("T is defined for 2-D tensors only")
        out = _result(self.data.T, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad.T)
        return out

    def __getitem__(self, idx):
        out = _result(self.data[idx], (self,))
        if out.requires_grad:

            def backward():
                g = np.zeros_like(self.data)
                np.add.at(g, idx, out.grad)
                self._accum(g)

            out._backward = backward
        return out

    def diagonal(self):
        if self.data.ndim != 2:
            raise ContractViolation("diagonal() is defined for 2-D tensors only")
        out = _result(np.diagonal(self.data).copy(), (self,))
        if out.requires_grad:

            def backward():
                g = np.zeros_like(self.data)
                np.fill_diagonal(g, out.grad)
                self._accum(g)

            out._backward = backward
        return out

    # -- nonlinearities ----------------------------------------------------------

    def exp(self):
        out = _result(np.exp(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * out.data)
        return out

    def log(self):
        out = _result(np.log(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad / self.data)
        return out

    def sqrt(self):
        out = _result(np.sqrt(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * 0.5 / out.data)
        return out

    def tanh(self):
        out = _result(np.tanh(self.data), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * (1.0 - out.data**2))
        return out

    def relu(self):
        out = _result(np.maximum(self.data, 0.0), (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(out.grad * (self.data > 0.0))
        return out

    def sigmoid(self):
        x = self.data
        val = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = _result(val, (self,))
        if out.requires_grad:
            out._backward = lambda: self._accum(
                out.grad * out.data * (1.0 - out.data)
            )
        return out

    def clip(self, lo: float, hi: float):
        """Clamp values; gradients pass through only where unclamped."""
        out = _result(np.clip(self.data, lo, hi), (self,))
        if out.requires_grad:
            mask = (self.data >= lo) & (self.data <= hi)

            def backward():
                self._accum(out.grad * mask)

            out._backward = backward
        return out


def _result(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Elementwise select with a constant (non-differentiable) condition."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = _result(np.where(cond, a.data, b.data), (a, b))
    if out.requires_grad:

        def backward():
            if a.requires_grad:
                a._accum(_unbroadcast(np.where(cond, out.grad, 0.0), a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(np.where(cond, 0.0, out.grad), b.data.shape))

        out._backward = backward
    return out


def maximum(a, b) -> Tensor:
    """Elementwise max; at ties the gradient flows to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    return where(a.data >= b.data, a, b)


def concat(tensors: list, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _result(np.concatenate([t.data for t in tensors], axis=axis),
                  tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * out.grad.ndim
                    sl[axis] = slice(lo, hi)
                    t._accum(out.grad[tuple(sl)])

        out._backward = backward
    return out


def stack(tensors: list, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:

        def backward():
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    t._accum(np.take(out.grad, i, axis=axis))

        out._backward = backward
    return out


def diag_embed(v) -> Tensor:
    """Square matrix with vector ``v`` on the diagonal, zeros elsewhere."""
    v = as_tensor(v)
    if v.data.ndim != 1:
        raise ContractViolation("diag_embed expects a 1-D tensor")
    out = _result(np.diag(v.data), (v,))
    if out.requires_grad:
        out._backward = lambda: v._accum(np.diagonal(out.grad).copy())
    return out


# -- linear algebra ------------------------------------------------------------


def cholesky(a: Tensor) -> Tensor:
    """Lower Cholesky factor; raises ``np.linalg.LinAlgError`` if not PD."""
    a = as_tensor(a)
    L = np.linalg.cholesky(a.data)
    out = _result(L, (a,))
    if out.requires_grad:

        def backward():
            g = out.grad
            # tril with halved diagonal, the projection onto valid
            # perturbations of a lower-triangular factor
            P = np.tril(L.T @ g)
            P[np.diag_indices_from(P)] *= 0.5
            tmp = _scipy_solve_triangular(L, P, lower=True, trans="T",
                                          check_finite=False)
            S = _scipy_solve_triangular(L, tmp.T, lower=True, trans="T",
                                        check_finite=False).T
            a._accum((S + S.T) * 0.5)

        out._backward = backward
    return out


def solve_triangular(L, b, trans: str = "N") -> Tensor:
    """Solve ``L x = b`` (``trans='N'``) or ``L^T x = b`` (``trans='T'``).

    ``L`` must be lower triangular; only its lower triangle receives
    gradient, matching how Cholesky factors are consumed.
    """
    L, b = as_tensor(L), as_tensor(b)
    if trans not in ("N", "T"):
        raise ContractViolation(f"trans must be 'N' or 'T', got {trans!r}")
    x = _scipy_solve_triangular(L.data, b.data, lower=True, trans=trans,
                                check_finite=False)
    out = _result(x, (L, b))
    if out.requires_grad:

        def backward():
            g = out.grad
            if trans == "N":
                gb = _scipy_solve_triangular(L.data, g, lower=True, trans="T",
                                             check_finite=False)
                if L.requires_grad:
                    if x.ndim == 1:
                        gL = -np.outer(gb, x)
                    else:
                        gL = -gb @ x.T
                    L._accum(np.tril(gL))
            else:
                gb = _scipy_solve_triangular(L.data, g, lower=True, trans="N",
                                             check_finite=False)
                if L.requires_grad:
                    if x.ndim == 1:
                        gL = -np.outer(x, gb)
                    else:
                        gL = -x @ gb.T
                    L._accum(np.tril(gL))
            if b.requires_grad:
                b._accum(gb)

        out._backward = backward
    return out


def ard_kernel(A, B, log_ls, log_sv) -> Tensor:
    """ARD squared-exponential Gram matrix as one fused tape node.

    ``K[i, j] = exp(log_sv) * exp(-0.5 * sum_d ((A[i,d]-B[j,d]) *
    exp(-log_ls[d]))**2)``. Forward and backward both dispatch to the
    compiled kernels in :mod:`wetchicken.accel`.
    """
    A, B = as_tensor(A), as_tensor(B)
    log_ls, log_sv = as_tensor(log_ls), as_tensor(log_sv)
    inv_ls = np.exp(-log_ls.data)
    sv = float(np.exp(log_sv.data))
    K = accel.ard_sqexp(np.ascontiguousarray(A.data),
                        np.ascontiguousarray(B.data), inv_ls, sv)
    out = _result(K, (A, B, log_ls, log_sv))
    if out.requires_grad:

        def backward():
            gA, gB, g_log_sv, g_log_ls = accel.ard_sqexp_vjp(
                np.ascontiguousarray(out.grad), K,
                np.ascontiguousarray(A.data),
                np.ascontiguousarray(B.data), inv_ls)
            if A.requires_grad:
                A._accum(gA)
            if B.requires_grad:
                B._accum(gB)
            if log_ls.requires_grad:
                log_ls._accum(g_log_ls)
            if log_sv.requires_grad:
                log_sv._accum(np.asarray(g_log_sv))

        out._backward = backward
    return out
