"""Finite-difference verification of engine gradients.

Central differences with step 1e-4 in 64-bit mode are the reference for
every primitive; the same machinery drives the ``gradcheck`` CLI command.
Complex tensors are perturbed component-wise as (re, im) pairs, matching
the engine's gradient convention.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tensor, backward, precision

DEFAULT_STEP = 1e-4
FIRST_ORDER_TOL = 1e-4
SECOND_ORDER_TOL = 1e-3


def _flat_view(t: Tensor) -> np.ndarray:
    """Real view of the tensor's storage for component perturbation."""
    if t.is_complex:
        return t.data.view(t.data.real.dtype).reshape(-1)
    return t.data.reshape(-1)


def numeric_gradient(f: Callable[[], Tensor], leaf: Tensor,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of scalar f w.r.t. every component of leaf.

    Returns an array shaped like leaf (complex entries combine the re/im
    partials into re + i*im, the engine's convention).
    """
    flat = _flat_view(leaf)
    out = np.zeros_like(flat, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f().data)
        flat[i] = orig - step
        fm = float(f().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * step)
    if leaf.is_complex:
        return (out[0::2] + 1j * out[1::2]).reshape(leaf.shape)
    return out.reshape(leaf.shape)


def rel_error(approx: np.ndarray, exact: np.ndarray) -> float:
    """Symmetric max-norm relative error with an absolute floor."""
    diff = np.max(np.abs(approx - exact))
    scale = max(np.max(np.abs(approx)), np.max(np.abs(exact)), 1e-8)
    return float(diff / scale)


def check_gradients(f: Callable[[], Tensor], leaves: Sequence[Tensor],
                    step: float = DEFAULT_STEP) -> float:
    """Worst relative error between backward() and finite differences."""
    loss = f()
    grads = backward(loss)
    worst = 0.0
    for leaf in leaves:
        num = numeric_gradient(f, leaf, step)
        got = grads.get(leaf)
        got_data = np.zeros_like(num) if got is None else got.data
        worst = max(worst, rel_error(got_data, num))
    return worst


def check_second_order(f: Callable[[], Tensor], leaves: Sequence[Tensor],
                       direction_leaf: Tensor, rng: np.random.Generator,
                       step: float = DEFAULT_STEP) -> float:
    """Verify double backward against finite differences of the gradient.

    Builds s(x) = <grad_{direction_leaf} f, v> with create_graph, then
    compares backward(s) to central differences of that inner product.
    """
    v = Tensor(rng.standard_normal(direction_leaf.shape))

    def inner() -> Tensor:
        loss = f()
        g = backward(loss, create_graph=True)[direction_leaf]
        return ops.sum_all(ops.mul(g, v))

    s = inner()
    second = backward(s)
    worst = 0.0
    for leaf in leaves:
        num = numeric_gradient(inner, leaf, step)
        got = second.get(leaf)
        got_data = np.zeros_like(num) if got is None else got.data
        worst = max(worst, rel_error(got_data, num))
    return worst


def _rand(rng: np.random.Generator, shape, positive: bool = False,
          requires_grad: bool = True) -> Tensor:
    data = rng.standard_normal(shape)
    if positive:
        data = np.abs(data) + 0.5
    return Tensor(data, requires_grad=requires_grad)


def _suite_cases(rng: np.random.Generator):
    """One randomized check per primitive; yields (name, callable -> err)."""
    h = int(rng.integers(2, 5)) * 2
    w = int(rng.integers(2, 5)) * 2

    def ew(kind):
        a = _rand(rng, (3, h))
        b = _rand(rng, (3, h))
        pos = _rand(rng, (3, h), positive=True)
        if kind == "add":
            fn = lambda: ops.sum_all(ops.square(ops.add(a, b)))
            leaves = [a, b]
        elif kind == "sub":
            fn = lambda: ops.sum_all(ops.square(ops.sub(a, b)))
            leaves = [a, b]
        elif kind == "mul":
            fn = lambda: ops.sum_all(ops.mul(a, b))
            leaves = [a, b]
        elif kind == "div":
            fn = lambda: ops.sum_all(ops.div(a, pos))
            leaves = [a, pos]
        elif kind == "relu":
            fn = lambda: ops.sum_all(ops.square(ops.relu(a)))
            leaves = [a]
        elif kind == "leaky_relu":
            fn = lambda: ops.sum_all(ops.square(ops.leaky_relu(a, 0.1)))
            leaves = [a]
        elif kind == "sigmoid":
            fn = lambda: ops.sum_all(ops.square(ops.sigmoid(a)))
            leaves = [a]
        elif kind == "softplus":
            fn = lambda: ops.sum_all(ops.square(ops.softplus(a)))
            leaves = [a]
        elif kind == "log":
            fn = lambda: ops.sum_all(ops.log(pos))
            leaves = [pos]
        elif kind == "sqrt":
            fn = lambda: ops.sum_all(ops.sqrt(pos))
            leaves = [pos]
        elif kind == "abs":
            fn = lambda: ops.sum_all(ops.mul(ops.abs_(a), b))
            leaves = [a]
        elif kind == "square":
            fn = lambda: ops.sum_all(ops.square(a))
            leaves = [a]
        elif kind == "exp":
            fn = lambda: ops.sum_all(ops.exp(a))
            leaves = [a]
        else:
            raise AssertionError(kind)
        return check_gradients(fn, leaves)

    for kind in ("add", "sub", "mul", "div", "relu", "leaky_relu", "sigmoid",
                 "softplus", "log", "sqrt", "abs", "square", "exp"):
        yield f"elementwise/{kind}", (lambda k=kind: ew(k))

    def conv_case():
        x = _rand(rng, (2, 5, 7))
        wt = _rand(rng, (3, 2, 3, 3))
        bias = _rand(rng, (3,))
        fn = lambda: ops.sum_all(ops.square(ops.conv2d(x, wt, bias, padding="same")))
        return check_gradients(fn, [x, wt, bias])

    yield "conv2d/same", conv_case

    def conv_valid_case():
        x = _rand(rng, (2, 6, 6))
        wt = _rand(rng, (1, 2, 3, 3))
        fn = lambda: ops.sum_all(ops.square(ops.conv2d(x, wt, padding="valid")))
        return check_gradients(fn, [x, wt])

    yield "conv2d/valid", conv_valid_case

    def pool_case(kind):
        x = _rand(rng, (2, h, w))
        if kind == "max":
            fn = lambda: ops.sum_all(ops.square(ops.maxpool2d(x, 2)))
        else:
            fn = lambda: ops.sum_all(ops.square(ops.avgpool2d(x, 2)))
        return check_gradients(fn, [x])

    yield "pool2d/max", lambda: pool_case("max")
    yield "pool2d/avg", lambda: pool_case("avg")

    def gn_case():
        x = _rand(rng, (4, h, w))
        gain = _rand(rng, (4,))
        bias = _rand(rng, (4,))
        fn = lambda: ops.sum_all(ops.square(ops.group_norm(x, 2, gain, bias)))
        return check_gradients(fn, [x, gain, bias])

    yield "group_norm", gn_case

    def reduce_case(kind):
        x = _rand(rng, (3, h, w))
        if kind == "sum":
            fn = lambda: ops.sum_all(ops.square(ops.sum_axes(x, (1,))))
        else:
            fn = lambda: ops.sum_all(ops.square(ops.mean_axes(x, (0, 2))))
        return check_gradients(fn, [x])

    yield "reduce/sum", lambda: reduce_case("sum")
    yield "reduce/mean", lambda: reduce_case("mean")

    def shape_case(kind):
        x = _rand(rng, (3, h, w))
        if kind == "reshape":
            fn = lambda: ops.sum_all(ops.square(ops.reshape(x, (h, 3 * w))))
        elif kind == "transpose":
            other = _rand(rng, (3, w, h), requires_grad=False)
            fn = lambda: ops.sum_all(ops.mul(ops.swap_last2(x), other))
        elif kind == "concat":
            y = _rand(rng, (2, h, w))
            fn = lambda: ops.sum_all(ops.square(ops.concat([x, y], axis=0)))
            return check_gradients(fn, [x, y])
        elif kind == "narrow":
            fn = lambda: ops.sum_all(ops.square(ops.narrow(x, 1, 1, h - 2)))
        elif kind == "pad":
            fn = lambda: ops.sum_all(ops.square(ops.pad_axis(x, 2, 1, 2)))
        elif kind == "flip2d":
            fn = lambda: ops.sum_all(ops.square(ops.flip2d(x)))
        else:
            raise AssertionError(kind)
        return check_gradients(fn, [x])

    for kind in ("reshape", "transpose", "concat", "narrow", "pad", "flip2d"):
        yield f"shape/{kind}", (lambda k=kind: shape_case(k))

    def fft_case(kind):
        fh, fw = 2 ** int(rng.integers(1, 4)), 2 ** int(rng.integers(1, 4))
        re_p = _rand(rng, (fh, fw))
        im_p = _rand(rng, (fh, fw))
        if kind == "fft2":
            tf = ops.fft2
        else:
            tf = ops.ifft2
        fn = lambda: ops.sum_all(ops.square(ops.abs_(tf(ops.to_complex(re_p, im_p)))))
        return check_gradients(fn, [re_p, im_p])

    yield "fft/fft2", lambda: fft_case("fft2")
    yield "fft/ifft2", lambda: fft_case("ifft2")

    def complex_case():
        fh, fw = 4, 4
        re_p = _rand(rng, (fh, fw))
        im_p = _rand(rng, (fh, fw))
        other = Tensor(rng.standard_normal((fh, fw)) + 1j * rng.standard_normal((fh, fw)))

        def fn():
            z = ops.to_complex(re_p, im_p)
            prod = ops.mul(z, other)
            shifted = ops.ifftshift2(ops.fftshift2(prod))
            return ops.sum_all(ops.add(ops.square(ops.real(shifted)),
                                       ops.square(ops.imag(shifted))))
        return check_gradients(fn, [re_p, im_p])

    yield "complex/mul_shift", complex_case


def _second_order_cases(rng: np.random.Generator):
    """Double-backward checks over the adversary op set."""
    def net_case():
        x = Tensor(rng.standard_normal((1, 4, 4)), requires_grad=True)
        w1 = Tensor(rng.standard_normal((2, 1, 3, 3)) * 0.5, requires_grad=True)
        b1 = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)
        gain = Tensor(np.abs(rng.standard_normal(2)) + 0.5, requires_grad=True)
        bias = Tensor(rng.standard_normal(2) * 0.1, requires_grad=True)
        w2 = Tensor(rng.standard_normal((1, 2, 3, 3)) * 0.5, requires_grad=True)

        def fn():
            y = ops.conv2d(x, w1, b1, padding="same")
            y = ops.group_norm(y, 2, gain, bias)
            y = ops.leaky_relu(y, 0.1)
            y = ops.conv2d(y, w2, padding="same")
            y = ops.avgpool2d(y, 2)
            # offset keeps a mix of active/inactive units for any seed
            y = ops.relu(ops.add(y, Tensor(0.3)))
            return ops.sigmoid(ops.mean_all(ops.square(y)))

        return check_second_order(fn, [w1, b1, gain, bias, w2, x], x, rng)

    yield "double/conv_gn_pool_net", net_case

    def maxpool_case():
        x = Tensor(rng.standard_normal((1, 4, 4)), requires_grad=True)
        w1 = Tensor(rng.standard_normal((2, 1, 3, 3)) * 0.5, requires_grad=True)

        def fn():
            y = ops.conv2d(x, w1, padding="same")
            y = ops.maxpool2d(y, 2)
            return ops.mean_all(ops.square(y))

        return check_second_order(fn, [w1, x], x, rng)

    yield "double/conv_maxpool", maxpool_case

    def arith_case():
        x = Tensor(rng.standard_normal(6), requires_grad=True)
        y = Tensor(np.abs(rng.standard_normal(6)) + 0.5, requires_grad=True)

        def fn():
            t = ops.div(ops.mul(x, y), ops.add(ops.square(y), Tensor(1.0)))
            return ops.sigmoid(ops.sum_all(ops.mul(t, t)))

        return check_second_order(fn, [x, y], x, rng)

    yield "double/arithmetic", arith_case


def run_suite(seeds: int = 100, verbose: bool = False):
    """Randomized gradient checks for every primitive plus double-backward
    cases, in 64-bit mode. Returns (all_passed, [(name, worst_err, tol)])."""
    first: dict = {}
    second: dict = {}
    with precision("float64"):
        for seed in range(seeds):
            rng = np.random.default_rng(1000 + seed)
            for name, case in _suite_cases(rng):
                err = case()
                first[name] = max(first.get(name, 0.0), err)
            # second-order sweeps cost more; a quarter of the seeds is ample
            if seed % 4 == 0:
                rng2 = np.random.default_rng(2000 + seed)
                for name, case in _second_order_cases(rng2):
                    err = case()
                    second[name] = max(second.get(name, 0.0), err)
    rows = [(name, err, FIRST_ORDER_TOL) for name, err in sorted(first.items())]
    rows += [(name, err, SECOND_ORDER_TOL) for name, err in sorted(second.items())]
    ok = all(err < tol for _, err, tol in rows)
    if verbose:
        for name, err, tol in rows:
            status = "ok" if err < tol else "FAIL"
            print(f"  {status:4s} {name:28s} max rel err {err:.3e} (tol {tol:.0e})")
    return ok, rows
