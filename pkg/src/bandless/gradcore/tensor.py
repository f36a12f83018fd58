"""Reverse-mode differentiable tensors over real and complex numpy arrays.

A Tensor wraps a row-major numpy array plus an optional ``node`` describing
the operation that produced it. Backward rules live in :mod:`bandless.gradcore.ops`
and are themselves written in terms of engine operations, so running
``backward(..., create_graph=True)`` yields gradients that carry their own
nodes and can be differentiated a second time (needed for gradient penalties).

Gradient convention for complex tensors: for a real-valued scalar loss L,
the gradient reported for a complex leaf z is dL/dRe(z) + i * dL/dIm(z)
(the conjugate Wirtinger derivative, same convention as mainstream autodiff
frameworks). Finite-difference checks treat a complex value as the real
pair (re, im).

Float32/complex64 is the default storage precision; tests switch the
default to 64-bit via :func:`set_default_dtype` or the :func:`precision`
context manager.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional

import numpy as np


class GradcoreError(Exception):
    """Base error for engine misuse (shape, dtype, domain)."""


class DomainError(GradcoreError):
    """Raised in checked mode when an input leaves an op's domain."""


class NumericError(GradcoreError):
    """Raised in checked mode when an op produces non-finite values."""


_state = threading.local()


def _st():
    if not hasattr(_state, "grad_enabled"):
        _state.grad_enabled = True
        _state.checked = True
        _state.default_real = np.float32
    return _state


def grad_enabled() -> bool:
    return _st().grad_enabled


def checked_mode() -> bool:
    return _st().checked


@contextlib.contextmanager
def no_grad():
    st = _st()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


@contextlib.contextmanager
def enable_grad():
    st = _st()
    prev = st.grad_enabled
    st.grad_enabled = True
    try:
        yield
    finally:
        st.grad_enabled = prev


def set_checked(flag: bool) -> None:
    """Toggle domain/NaN guards. On by default; turn off for benchmark runs."""
    _st().checked = bool(flag)


def set_default_dtype(name: str) -> None:
    """Set default real storage dtype: "float32" or "float64"."""
    if name not in ("float32", "float64"):
        raise GradcoreError(f"unsupported default dtype {name!r}")
    _st().default_real = np.float32 if name == "float32" else np.float64


def default_real_dtype() -> np.dtype:
    return np.dtype(_st().default_real)


def default_complex_dtype() -> np.dtype:
    return np.dtype(np.complex64 if _st().default_real is np.float32 else np.complex128)


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the default storage precision ("float64" in tests)."""
    st = _st()
    prev = st.default_real
    set_default_dtype(name)
    try:
        yield
    finally:
        st.default_real = prev


class Node:
    """Record of the op that produced a tensor; enables reverse traversal.

    ``backward`` maps the output gradient to a tuple of input gradients,
    one entry per input (None for non-differentiable inputs). Selective
    nodes take a second argument, a tuple of per-input need flags, and may
    skip computing gradients that will be discarded.
    """

    __slots__ = ("op", "inputs", "backward", "selective")

    def __init__(self, op: str, inputs: tuple, backward: Callable,
                 selective: bool = False):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.selective = selective


class Tensor:
    """N-dimensional real or complex array with an optional diff record.

    Tensors compare by identity (usable as dict keys); ``data`` is treated
    as immutable by all ops. Optimizers may update leaf ``data`` in place
    between training steps, after the step's graphs are discarded.
    """

    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: Optional[Node] = None,
                 dtype=None):
        if isinstance(data, Tensor):
            raise GradcoreError("wrapping a Tensor in a Tensor; pass .data instead")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind in "iub":
            arr = arr.astype(default_real_dtype())
        elif arr.dtype.kind == "f" and arr.dtype.itemsize not in (4, 8):
            arr = arr.astype(default_real_dtype())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node = node

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_complex(self) -> bool:
        return self.data.dtype.kind == "c"

    @property
    def re(self) -> np.ndarray:
        """Real component as a plain array (documented value accessor)."""
        return np.ascontiguousarray(self.data.real)

    @property
    def im(self) -> np.ndarray:
        """Imaginary component as a plain array (zero for real tensors)."""
        return np.ascontiguousarray(self.data.imag)

    def item(self) -> float:
        return self.data.item()

    def numpy(self) -> np.ndarray:
        """The underlying array. Treat as read-only."""
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, node=None)

    def requires_grad_(self, flag: bool = True) -> "Tensor":
        if self.node is not None and flag:
            raise GradcoreError("requires_grad_ is for leaf tensors only")
        self.requires_grad = bool(flag)
        return self

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        grad = "" if self.node is None else f", op={self.node.op}"
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{grad})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # Arithmetic operators are attached by bandless.gradcore.ops at import
    # time to avoid a circular module dependency.


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def needs_graph(inputs: Iterable[Tensor]) -> bool:
    """True if an op over these inputs should record a node."""
    if not grad_enabled():
        return False
    return any(t.requires_grad or t.node is not None for t in inputs)


def stop_gradient(x: Tensor) -> Tensor:
    """Value-identical tensor with no diff record (shares storage)."""
    return Tensor(x.data, requires_grad=False, node=None)


def _toposort(root: Tensor) -> list:
    """Tensors with nodes, children before parents. Iterative DFS."""
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for inp in t.node.inputs:
            if inp.node is not None and id(inp) not in seen:
                stack.append((inp, False))
    return order


def backward(root: Tensor, create_graph: bool = False, wrt=None) -> dict:
    """Reverse-mode sweep from a scalar root.

    Returns a dict mapping each reachable differentiable leaf (a tensor
    with ``requires_grad`` and no node) to its gradient tensor. With
    ``create_graph=True`` the returned gradients carry their own diff
    records and support a further backward pass. ``wrt`` optionally limits
    the sweep to the given leaves, skipping gradient branches that cannot
    reach them.
    """
    if root.data.size != 1:
        raise GradcoreError(f"backward root must be scalar, got shape {root.shape}")
    if root.node is None:
        raise GradcoreError("backward root has no diff record")

    from . import ops  # deferred: ops imports this module

    order = _toposort(root)

    wrt_ids = None
    reaches: dict = {}
    if wrt is not None:
        wrt_ids = {id(t) for t in wrt}
        for t in order:  # children precede parents
            reaches[id(t)] = any(
                id(inp) in wrt_ids or reaches.get(id(inp), False)
                for inp in t.node.inputs
            )

    def needed(inp: Tensor) -> bool:
        if inp.node is None:
            if not inp.requires_grad:
                return False
            return wrt_ids is None or id(inp) in wrt_ids
        if wrt_ids is not None and not reaches.get(id(inp), False):
            return False
        return True

    grads: dict = {id(root): Tensor(np.ones_like(root.data))}
    leaves: dict = {}

    ctx = enable_grad() if create_graph else no_grad()
    with ctx:
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            need = tuple(needed(inp) for inp in t.node.inputs)
            if not any(need):
                continue
            if t.node.selective:
                in_grads = t.node.backward(g, need)
            else:
                in_grads = t.node.backward(g)
            for inp, ig, keep in zip(t.node.inputs, in_grads, need):
                if ig is None or not keep:
                    continue
                if inp.node is None:
                    acc = leaves.get(inp)
                    leaves[inp] = ig if acc is None else ops.add(acc, ig)
                else:
                    acc = grads.get(id(inp))
                    grads[id(inp)] = ig if acc is None else ops.add(acc, ig)
    return leaves
