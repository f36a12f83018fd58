"""Primitive differentiable operations.

Every backward rule is written in terms of other engine ops, so a backward
pass run with ``create_graph=True`` produces gradients that are themselves
differentiable. Ops that save data-dependent selections (relu masks,
max-pool argmax indices) treat the selection as a constant, which is the
usual almost-everywhere subgradient convention.

conv2d implements cross-correlation (no kernel flip), the convention used
by every mainstream deep learning framework.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    DomainError,
    GradcoreError,
    Node,
    NumericError,
    Tensor,
    as_tensor,
    checked_mode,
    needs_graph,
    stop_gradient,
)

__all__ = [
    "add", "sub", "neg", "mul", "div", "pow_const", "square", "sqrt",
    "exp", "log", "abs_", "relu", "leaky_relu", "sigmoid", "softplus",
    "sum_all", "sum_axes", "mean_all", "mean_axes",
    "reshape", "transpose", "swap_last2", "expand", "concat", "narrow",
    "pad_axis", "flip2d",
    "conv2d", "maxpool2d", "avgpool2d", "group_norm",
    "fft2", "ifft2", "fftshift2", "ifftshift2",
    "to_complex", "real", "imag", "conj",
    "stop_gradient",
]


def _result(op: str, data: np.ndarray, inputs: tuple, backward,
            selective: bool = False) -> Tensor:
    if checked_mode() and data.dtype.kind in "fc":
        if not np.all(np.isfinite(data)):
            raise NumericError(f"{op}: non-finite values in output")
    node = Node(op, inputs, backward, selective) if needs_graph(inputs) else None
    return Tensor(data, node=node)


def _const_like(value, ref: Tensor) -> Tensor:
    return Tensor(np.asarray(value, dtype=ref.data.dtype))


def _unbroadcast(g: Tensor, ref: Tensor) -> Tensor:
    """Reduce a gradient back to ref's shape after broadcasting.

    Sums over broadcast axes and drops the imaginary part when the
    reference input was real but the op result was complex.
    """
    if g.is_complex and not ref.is_complex:
        g = real(g)
    gs, rs = g.shape, ref.shape
    if gs == rs:
        return g
    lead = len(gs) - len(rs)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, (r, gg) in enumerate(zip(rs, gs[lead:])) if r == 1 and gg != 1
    )
    if axes:
        g = sum_axes(g, axes, keepdims=True)
    return reshape(g, rs)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a), _unbroadcast(g, b)

    return _result("add", a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a), _unbroadcast(neg(g), b)

    return _result("sub", a.data - b.data, (a, b), bwd)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (neg(g),)

    return _result("neg", -a.data, (a,), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        return _unbroadcast(mul(g, conj(b)), a), _unbroadcast(mul(g, conj(a)), b)

    return _result("mul", a.data * b.data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if checked_mode() and np.any(b.data == 0):
        raise DomainError("div: exact zero divisor")
    out_data = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(div(g, conj(b)), a)
        gb = _unbroadcast(neg(div(mul(g, conj(a)), conj(mul(b, b)))), b)
        return ga, gb

    return _result("div", out_data, (a, b), bwd)


def pow_const(a, p: float) -> Tensor:
    """a ** p for a real tensor and a constant real exponent."""
    a = as_tensor(a)
    if a.is_complex:
        raise GradcoreError("pow_const: real tensors only")
    if checked_mode():
        if p != int(p) and np.any(a.data < 0):
            raise DomainError("pow_const: fractional power of negative base")
        if p < 0 and np.any(a.data == 0):
            raise DomainError("pow_const: negative power of zero")

    def bwd(g):
        return (mul(mul(g, _const_like(p, a)), pow_const(a, p - 1.0)),)

    return _result("pow", a.data ** p, (a,), bwd)


def square(a) -> Tensor:
    return pow_const(a, 2.0)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if checked_mode() and np.any(a.data < 0):
        raise DomainError("sqrt: negative input")
    return pow_const(a, 0.5)


def exp(a) -> Tensor:
    a = as_tensor(a)
    if a.is_complex:
        raise GradcoreError("exp: real tensors only")
    out = _result("exp", np.exp(a.data), (a,), None)

    def bwd(g):
        return (mul(g, out),)

    if out.node is not None:
        out.node.backward = bwd
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    if a.is_complex:
        raise GradcoreError("log: real tensors only")
    if checked_mode() and np.any(a.data <= 0):
        raise DomainError("log: non-positive input")

    def bwd(g):
        return (div(g, a),)

    return _result("log", np.log(a.data), (a,), bwd)


def abs_(a) -> Tensor:
    """Absolute value; complex magnitude for complex tensors.

    Complex backward uses the saved phase as a constant, which is exact for
    first-order gradients; the second-order path never crosses complex abs.
    """
    a = as_tensor(a)
    if a.is_complex:
        mag = np.abs(a.data)
        phase = Tensor(a.data / np.maximum(mag, np.finfo(mag.dtype).tiny))

        def bwd(g):
            return (mul(to_complex(g, _const_like(0.0, g)), phase),)

        return _result("abs", mag, (a,), bwd)

    sign = Tensor(np.sign(a.data))

    def bwd_r(g):
        return (mul(g, sign),)

    return _result("abs", np.abs(a.data), (a,), bwd_r)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = Tensor((a.data > 0).astype(a.data.dtype))

    def bwd(g):
        return (mul(g, mask),)

    return _result("relu", np.where(a.data > 0, a.data, 0), (a,), bwd)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = Tensor(np.where(a.data > 0, 1.0, slope).astype(a.data.dtype))

    def bwd(g):
        return (mul(g, factor),)

    return _result("leaky_relu", np.where(a.data > 0, a.data, slope * a.data), (a,), bwd)


def softplus(a) -> Tensor:
    """log(1 + exp(a)), computed stably; derivative is sigmoid(a)."""
    a = as_tensor(a)
    if a.is_complex:
        raise GradcoreError("softplus: real tensors only")

    def bwd(g):
        return (mul(g, sigmoid(a)),)

    return _result("softplus", np.logaddexp(np.zeros((), dtype=a.data.dtype), a.data),
                   (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)
    out = _result("sigmoid", out_data, (a,), None)

    def bwd(g):
        return (mul(g, mul(out, sub(_const_like(1.0, out), out))),)

    if out.node is not None:
        out.node.backward = bwd
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (expand(g, a.shape),)

    return _result("sum", np.sum(a.data).reshape(()), (a,), bwd)


def sum_axes(a, axes, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = (axes,) if isinstance(axes, int) else tuple(axes)
    axes = tuple(ax % a.ndim for ax in axes)
    kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))

    def bwd(g):
        return (expand(reshape(g, kept), a.shape),)

    return _result("sum_axes", np.sum(a.data, axis=axes, keepdims=keepdims), (a,), bwd)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    return mul(sum_all(a), _const_like(1.0 / a.size, a))


def mean_axes(a, axes, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes_t = (axes,) if isinstance(axes, int) else tuple(axes)
    n = 1
    for ax in axes_t:
        n *= a.shape[ax % a.ndim]
    return mul(sum_axes(a, axes_t, keepdims), _const_like(1.0 / n, a))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def bwd(g):
        return (reshape(g, a.shape),)

    return _result("reshape", a.data.reshape(shape), (a,), bwd)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (transpose(g, inv),)

    return _result("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd)


def swap_last2(a) -> Tensor:
    """Transpose the trailing two axes (the image-orientation flip)."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise GradcoreError("swap_last2 needs at least 2 dimensions")
    perm = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    return transpose(a, perm)


def expand(a, shape) -> Tensor:
    """Broadcast to a larger shape (numpy broadcasting rules)."""
    a = as_tensor(a)
    shape = tuple(shape)
    out_data = np.broadcast_to(a.data, shape)

    def bwd(g):
        return (_unbroadcast(g, a),)

    return _result("expand", np.ascontiguousarray(out_data), (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bwd(g):
        return tuple(
            narrow(g, axis, int(offsets[i]), sizes[i]) for i in range(len(tensors))
        )

    return _result("concat", np.concatenate([t.data for t in tensors], axis=axis),
                   tensors, bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = as_tensor(a)
    axis = axis % a.ndim
    if start < 0 or start + length > a.shape[axis]:
        raise GradcoreError(
            f"narrow: [{start}, {start + length}) outside axis {axis} of extent {a.shape[axis]}"
        )
    idx = tuple(slice(start, start + length) if i == axis else slice(None)
                for i in range(a.ndim))

    def bwd(g):
        return (pad_axis(g, axis, start, a.shape[axis] - start - length),)

    return _result("narrow", np.ascontiguousarray(a.data[idx]), (a,), bwd)


def pad_axis(a, axis: int, before: int, after: int) -> Tensor:
    """Zero-pad one axis."""
    a = as_tensor(a)
    axis = axis % a.ndim
    widths = [(0, 0)] * a.ndim
    widths[axis] = (before, after)

    def bwd(g):
        return (narrow(g, axis, before, a.shape[axis]),)

    return _result("pad", np.pad(a.data, widths), (a,), bwd)


def flip2d(a) -> Tensor:
    """Reverse the trailing two axes (kernel rotation for conv adjoints)."""
    a = as_tensor(a)

    def bwd(g):
        return (flip2d(g),)

    return _result("flip2d", np.ascontiguousarray(a.data[..., ::-1, ::-1]), (a,), bwd)


# ---------------------------------------------------------------------------
# convolution family
#
# conv2d is bilinear in (input, weight); its two adjoints are again bilinear
# and the three operations close under differentiation:
#   d conv(x, w)        -> igrad(g, w), wgrad(x, g)
#   d igrad(g, w)       -> conv(h, w),  wgrad(h, g)
#   d wgrad(x, g)       -> igrad(g, q), conv(x, q)
# ---------------------------------------------------------------------------

def _pad_hw(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)))


def _im2col(xp: np.ndarray, kh: int, kw: int):
    """(c, Hp, Wp) -> ((c*kh*kw, Ho*Wo) patch matrix, Ho, Wo)."""
    c = xp.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    ho, wo = win.shape[1], win.shape[2]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo), ho, wo


def _corr_value(x: np.ndarray, w: np.ndarray, ph: int, pw: int) -> np.ndarray:
    co, ci, kh, kw = w.shape
    col, ho, wo = _im2col(_pad_hw(x, ph, pw), kh, kw)
    return (w.reshape(co, ci * kh * kw) @ col).reshape(co, ho, wo)


def _wgrad_value(x: np.ndarray, g: np.ndarray, ph: int, pw: int,
                 kh: int, kw: int) -> np.ndarray:
    ci = x.shape[0]
    co = g.shape[0]
    col, ho, wo = _im2col(_pad_hw(x, ph, pw), kh, kw)
    return (g.reshape(co, ho * wo) @ col.T).reshape(co, ci, kh, kw)


def _check_conv_shapes(x: Tensor, w: Tensor) -> None:
    if x.ndim != 3:
        raise GradcoreError(f"conv2d input must be (c_in, h, w), got {x.shape}")
    if w.ndim != 4:
        raise GradcoreError(f"conv2d weight must be (c_out, c_in, kh, kw), got {w.shape}")
    if x.shape[0] != w.shape[1]:
        raise GradcoreError(
            f"conv2d channel axis mismatch: input c_in={x.shape[0]}, weight c_in={w.shape[1]}"
        )
    if x.is_complex or w.is_complex:
        raise GradcoreError("conv2d: real tensors only")


_NEED_ALL = (True, True)


def _conv_core(x: Tensor, w: Tensor, ph: int, pw: int) -> Tensor:
    kh, kw = w.shape[2], w.shape[3]

    def bwd(g, need=_NEED_ALL):
        return (_conv_igrad(g, w, ph, pw, x.shape[1], x.shape[2]) if need[0] else None,
                _conv_wgrad(x, g, ph, pw, kh, kw) if need[1] else None)

    return _result("conv2d", _corr_value(x.data, w.data, ph, pw), (x, w), bwd,
                   selective=True)


def _conv_igrad(g: Tensor, w: Tensor, ph: int, pw: int, h: int, wd: int) -> Tensor:
    """Adjoint of conv2d w.r.t. its input; bilinear in (g, w)."""
    kh, kw = w.shape[2], w.shape[3]
    wt = w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    val = _corr_value(g.data, wt, kh - 1 - ph, kw - 1 - pw)

    def bwd(h_up, need=_NEED_ALL):
        return (_conv_core(h_up, w, ph, pw) if need[0] else None,
                _conv_wgrad(h_up, g, ph, pw, kh, kw) if need[1] else None)

    return _result("conv2d_igrad", val, (g, w), bwd, selective=True)


def _conv_wgrad(x: Tensor, g: Tensor, ph: int, pw: int, kh: int, kw: int) -> Tensor:
    """Adjoint of conv2d w.r.t. its weight; bilinear in (x, g)."""
    val = _wgrad_value(x.data, g.data, ph, pw, kh, kw)

    def bwd(q, need=_NEED_ALL):
        return (_conv_igrad(g, q, ph, pw, x.shape[1], x.shape[2]) if need[0] else None,
                _conv_core(x, q, ph, pw) if need[1] else None)

    return _result("conv2d_wgrad", val, (x, g), bwd, selective=True)


def conv2d(x, weight, bias=None, padding: str = "same") -> Tensor:
    """2D cross-correlation over a (c_in, h, w) input.

    padding "same" keeps the spatial extent (odd kernels only); "valid"
    shrinks it by kernel-1. Gradients are defined for input, weight and
    bias, including second order.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv_shapes(x, weight)
    kh, kw = weight.shape[2], weight.shape[3]
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise GradcoreError("same padding requires odd kernel extents")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise GradcoreError(f"unknown padding {padding!r}")
    out = _conv_core(x, weight, ph, pw)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise GradcoreError(
                f"bias axis 0 must have extent c_out={weight.shape[0]}, got {bias.shape}"
            )
        out = add(out, reshape(bias, (weight.shape[0], 1, 1)))
    return out


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def _check_pool(a: Tensor, k: int) -> None:
    if a.ndim != 3:
        raise GradcoreError(f"pool2d input must be (c, h, w), got {a.shape}")
    if a.shape[1] % k or a.shape[2] % k:
        raise GradcoreError(
            f"pool2d: spatial extents {a.shape[1:]} not divisible by window {k}"
        )


def maxpool2d(a, k: int) -> Tensor:
    """Non-overlapping k x k max pooling. Gradient goes to the argmax
    element, first occurrence in row-major window order on ties."""
    a = as_tensor(a)
    _check_pool(a, k)
    c, h, w = a.shape
    ho, wo = h // k, w // k
    # (c, ho, wo, k*k); window elements are row-major so argmax ties break
    # on the first element in row-major order
    blocks = a.data.reshape(c, ho, k, wo, k).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, k * k)
    idx = blocks.argmax(axis=3)
    val = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def bwd(g):
        return (_pool_scatter(g, idx, k, (c, h, w)),)

    return _result("maxpool2d", val, (a,), bwd)


def _pool_scatter(g: Tensor, idx: np.ndarray, k: int, out_shape: tuple) -> Tensor:
    """Route window gradients back to their argmax positions; linear in g."""
    c, h, w = out_shape
    ho, wo = h // k, w // k
    blocks = np.zeros((c, ho, wo, k * k), dtype=g.data.dtype)
    np.put_along_axis(blocks, idx[..., None], g.data[..., None], axis=3)
    val = blocks.reshape(c, ho, wo, k, k).transpose(0, 1, 3, 2, 4).reshape(c, h, w)

    def bwd(h_up):
        return (_pool_gather(h_up, idx, k),)

    return _result("pool_scatter", val, (g,), bwd)


def _pool_gather(a: Tensor, idx: np.ndarray, k: int) -> Tensor:
    c, h, w = a.shape
    ho, wo = h // k, w // k
    blocks = a.data.reshape(c, ho, k, wo, k).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, k * k)
    val = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]

    def bwd(g):
        return (_pool_scatter(g, idx, k, (c, h, w)),)

    return _result("pool_gather", val, (a,), bwd)


def avgpool2d(a, k: int) -> Tensor:
    """Non-overlapping k x k average pooling (composite, fully second-order)."""
    a = as_tensor(a)
    _check_pool(a, k)
    c, h, w = a.shape
    blocks = reshape(a, (c, h // k, k, w // k, k))
    return mean_axes(blocks, (2, 4))


def group_norm(a, groups: int, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize (c, h, w) per channel group to zero mean, unit variance,
    then apply the per-channel affine transform."""
    a = as_tensor(a)
    if a.ndim != 3:
        raise GradcoreError(f"group_norm input must be (c, h, w), got {a.shape}")
    c, h, w = a.shape
    if c % groups:
        raise GradcoreError(f"group_norm: {c} channels not divisible by {groups} groups")
    gain, bias = as_tensor(gain), as_tensor(bias)
    if gain.shape != (c,) or bias.shape != (c,):
        raise GradcoreError("group_norm: gain/bias must have shape (c,)")
    grouped = reshape(a, (groups, (c // groups) * h * w))
    mu = mean_axes(grouped, 1, keepdims=True)
    centered = sub(grouped, mu)
    var = mean_axes(square(centered), 1, keepdims=True)
    normed = div(centered, sqrt(add(var, _const_like(eps, a))))
    normed = reshape(normed, (c, h, w))
    return add(mul(normed, reshape(gain, (c, 1, 1))), reshape(bias, (c, 1, 1)))


# ---------------------------------------------------------------------------
# FFT (orthonormal scaling, DC at index [0, 0]; fftshift2 recenters)
# ---------------------------------------------------------------------------

def _check_fft(a: Tensor) -> None:
    if not a.is_complex:
        raise GradcoreError("fft2/ifft2 expect complex tensors; use to_complex")
    if a.ndim < 2:
        raise GradcoreError("fft2/ifft2 need at least 2 dimensions")
    for ext in a.shape[-2:]:
        if ext < 1 or ext & (ext - 1):
            raise GradcoreError(f"fft2/ifft2: extent {ext} is not a power of two")


def fft2(a) -> Tensor:
    """Orthonormal 2D FFT over the trailing axes. Parseval holds exactly
    up to roundoff; the adjoint (= backward) is ifft2."""
    a = as_tensor(a)
    _check_fft(a)

    def bwd(g):
        return (ifft2(g),)

    return _result("fft2", np.fft.fft2(a.data, axes=(-2, -1), norm="ortho"), (a,), bwd)


def ifft2(a) -> Tensor:
    a = as_tensor(a)
    _check_fft(a)

    def bwd(g):
        return (fft2(g),)

    return _result("ifft2", np.fft.ifft2(a.data, axes=(-2, -1), norm="ortho"), (a,), bwd)


def fftshift2(a) -> Tensor:
    """Move DC from index [0, 0] to the array center (trailing two axes)."""
    a = as_tensor(a)

    def bwd(g):
        return (ifftshift2(g),)

    return _result("fftshift2", np.fft.fftshift(a.data, axes=(-2, -1)), (a,), bwd)


def ifftshift2(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (fftshift2(g),)

    return _result("ifftshift2", np.fft.ifftshift(a.data, axes=(-2, -1)), (a,), bwd)


# ---------------------------------------------------------------------------
# complex pack/unpack
# ---------------------------------------------------------------------------

def _complex_dtype_for(real_dtype: np.dtype) -> np.dtype:
    return np.dtype(np.complex64 if real_dtype == np.float32 else np.complex128)


def to_complex(re_part, im_part) -> Tensor:
    re_part, im_part = as_tensor(re_part), as_tensor(im_part)
    if re_part.is_complex or im_part.is_complex:
        raise GradcoreError("to_complex expects real components")
    cdt = _complex_dtype_for(np.result_type(re_part.data, im_part.data))
    val = (re_part.data + 1j * im_part.data).astype(cdt)

    def bwd(g):
        return _unbroadcast(real(g), re_part), _unbroadcast(imag(g), im_part)

    return _result("to_complex", val, (re_part, im_part), bwd)


def real(a) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a

    def bwd(g):
        return (to_complex(g, _const_like(0.0, g)),)

    return _result("real", np.ascontiguousarray(a.data.real), (a,), bwd)


def imag(a) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return mul(a, _const_like(0.0, a))

    def bwd(g):
        return (to_complex(_const_like(0.0, g), g),)

    return _result("imag", np.ascontiguousarray(a.data.imag), (a,), bwd)


def conj(a) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a

    def bwd(g):
        return (conj(g),)

    return _result("conj", np.conj(a.data), (a,), bwd)


# ---------------------------------------------------------------------------
# operator wiring
# ---------------------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__pow__ = lambda self, p: pow_const(self, float(p))
