"""Synthetic parallel-MRI data and Cartesian sampling physics.

Generates phantoms and coil sensitivities, simulates multi-coil k-space
acquisition, and builds/applies per-column sampling masks. K-space arrays
use the centered layout (DC at the array center), produced by composing
the engine's plain FFT with explicit shift ops; masks index columns in
this centered view.

All generators are pure functions of their seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradcore as gc
from .gradcore import Tensor

SLICE_MAGIC = b"BNDSLICE1"
_HEADER = struct.Struct("<IIIfQ")  # n_c, h, w, noise_sigma, seed


class KSpaceError(Exception):
    pass


def _check_pow2(value: int, what: str, minimum: int = 32) -> None:
    if value < minimum or value & (value - 1):
        raise KSpaceError(f"{what} must be a power of two >= {minimum}, got {value}")


# ---------------------------------------------------------------------------
# centered FFT composites (differentiable and plain-array variants)
# ---------------------------------------------------------------------------

def fft2c(x: Tensor) -> Tensor:
    """Image -> centered k-space (orthonormal)."""
    return gc.fftshift2(gc.fft2(gc.ifftshift2(x)))


def ifft2c(x: Tensor) -> Tensor:
    """Centered k-space -> image (orthonormal)."""
    return gc.fftshift2(gc.ifft2(gc.ifftshift2(x)))


def fft2c_np(x: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), axes=(-2, -1), norm="ortho"),
        axes=(-2, -1))


def ifft2c_np(x: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(x, axes=(-2, -1)), axes=(-2, -1), norm="ortho"),
        axes=(-2, -1))


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------

@dataclass
class Phantom:
    image: np.ndarray  # (h, w) float, values in [0, 1]
    seed: int
    kind: str


_KIND_CODES = {"ellipses": 0, "textured": 1}


def make_phantom(seed: int, h: int, w: int, kind: str = "ellipses") -> Phantom:
    """Random soft-tissue-like test image: composited ellipses, optionally
    with band-limited texture so fine-detail metrics have something to lose."""
    _check_pow2(h, "phantom height")
    _check_pow2(w, "phantom width")
    if kind not in _KIND_CODES:
        raise KSpaceError(f"unknown phantom kind {kind!r}")
    rng = np.random.default_rng([seed, _KIND_CODES[kind], h, w])

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy = (yy + 0.5) / h - 0.5
    xx = (xx + 0.5) / w - 0.5
    img = np.zeros((h, w))

    # one body ellipse, then smaller internal structures
    n_ell = int(rng.integers(5, 13))
    for i in range(n_ell):
        if i == 0:
            cy, cx = rng.uniform(-0.08, 0.08, 2)
            ay, ax = rng.uniform(0.28, 0.40, 2)
            amp = rng.uniform(0.35, 0.6)
        else:
            cy, cx = rng.uniform(-0.25, 0.25, 2)
            ay, ax = rng.uniform(0.03, 0.16, 2)
            amp = rng.uniform(-0.35, 0.55)
        theta = rng.uniform(0, np.pi)
        ct, st = np.cos(theta), np.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        inside = (u / ax) ** 2 + (v / ay) ** 2 <= 1.0
        img[inside] += amp

    if kind == "textured":
        noise = rng.standard_normal((h, w))
        fy = np.fft.fftfreq(h)[:, None]
        fx = np.fft.fftfreq(w)[None, :]
        # pass mid frequencies: detail fine enough to blur away, coarse
        # enough to survive 4x undersampling with a data-consistency model
        rad2 = fy ** 2 + fx ** 2
        band = np.exp(-rad2 / (2 * 0.18 ** 2)) - np.exp(-rad2 / (2 * 0.03 ** 2))
        tex = np.fft.ifft2(np.fft.fft2(noise) * band).real
        tex *= 0.25 / max(np.abs(tex).max(), 1e-12)
        img += tex * (img > 0.05)

    img = np.clip(img, 0.0, 1.0)
    return Phantom(image=img, seed=seed, kind=kind)


# ---------------------------------------------------------------------------
# coil sensitivities
# ---------------------------------------------------------------------------

@dataclass
class SensitivitySet:
    maps: np.ndarray  # (n_c, h, w) complex, RSS == 1 everywhere
    n_c: int


def make_sensitivities(seed: int, n_c: int, h: int, w: int) -> SensitivitySet:
    """Smooth complex Gaussian-bump coil profiles around the border,
    normalized pixelwise so the root-sum-squares is exactly 1."""
    if n_c < 1:
        raise KSpaceError(f"need at least one coil, got {n_c}")
    _check_pow2(h, "height")
    _check_pow2(w, "width")
    rng = np.random.default_rng([seed, 2, n_c, h, w])

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy = yy / h - 0.5
    xx = xx / w - 0.5
    maps = np.empty((n_c, h, w), dtype=np.complex128)
    for i in range(n_c):
        ang = 2 * np.pi * (i + rng.uniform(-0.15, 0.15)) / n_c
        cy, cx = 0.55 * np.sin(ang), 0.55 * np.cos(ang)
        width = rng.uniform(0.45, 0.6)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        # gentle linear phase ramp; total sweep under pi across the image
        py, px = rng.uniform(-0.4 * np.pi, 0.4 * np.pi, 2)
        phase = py * yy + px * xx + rng.uniform(0, 2 * np.pi)
        maps[i] = mag * np.exp(1j * phase)
    rss_map = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    maps /= rss_map
    return SensitivitySet(maps=maps, n_c=n_c)


def estimate_sensitivities(kspace: np.ndarray, n_center: int) -> SensitivitySet:
    """Low-pass auto-calibration estimate from the always-sampled center
    columns: s_i = lowres_i / RSS(lowres). Optional alternative to ground
    truth maps, selected by config."""
    n_c, h, w = kspace.shape
    sel = np.zeros(w)
    lo = w // 2 - n_center // 2
    sel[lo:lo + n_center] = 1.0
    low = ifft2c_np(kspace * sel[None, None, :])
    rss_map = np.sqrt(np.sum(np.abs(low) ** 2, axis=0))
    rss_map = np.maximum(rss_map, 1e-12 * rss_map.max() + 1e-30)
    return SensitivitySet(maps=low / rss_map, n_c=n_c)


# ---------------------------------------------------------------------------
# forward model
# ---------------------------------------------------------------------------

@dataclass
class KSpaceSlice:
    kspace: np.ndarray       # (n_c, h, w) complex, centered layout
    target: np.ndarray       # (h, w) real; RSS of the noiseless coil images
    sens: SensitivitySet
    noise_sigma: float
    seed: int

    @property
    def shape(self) -> tuple:
        return self.kspace.shape


def forward_model(phantom: Phantom, sens: SensitivitySet, noise_sigma: float,
                  seed: int) -> KSpaceSlice:
    """Simulate acquisition: per-coil FFT of the sensitivity-weighted image
    plus iid complex Gaussian noise (std noise_sigma per component)."""
    if noise_sigma < 0:
        raise KSpaceError(f"noise sigma must be nonnegative, got {noise_sigma}")
    if sens.maps.shape[1:] != phantom.image.shape:
        raise KSpaceError(
            f"sensitivity maps {sens.maps.shape} do not match image {phantom.image.shape}")
    coil_imgs = sens.maps * phantom.image
    kspace = fft2c_np(coil_imgs)
    if noise_sigma > 0:
        rng = np.random.default_rng([seed, 3])
        kspace = kspace + noise_sigma * (
            rng.standard_normal(kspace.shape) + 1j * rng.standard_normal(kspace.shape))
    target = np.sqrt(np.sum(np.abs(coil_imgs) ** 2, axis=0))
    return KSpaceSlice(
        kspace=kspace.astype(np.complex64),
        target=target.astype(np.float32),
        sens=SensitivitySet(maps=sens.maps.astype(np.complex64), n_c=sens.n_c),
        noise_sigma=float(noise_sigma),
        seed=int(seed),
    )


def make_slice(seed: int, h: int, w: int, n_c: int, noise_sigma: float,
               kind: str = "textured") -> KSpaceSlice:
    """Full simulation pipeline for one training instance."""
    phantom = make_phantom(seed, h, w, kind)
    sens = make_sensitivities(seed, n_c, h, w)
    return forward_model(phantom, sens, noise_sigma, seed)


def rss(coil_images: Tensor, eps: float = 0.0) -> Tensor:
    """Root-sum-squares coil combination; differentiable.

    eps > 0 floors the squared magnitude so the sqrt gradient stays finite
    at exactly-zero pixels (used inside the reconstruction model).
    """
    sq = gc.add(gc.square(gc.real(coil_images)), gc.square(gc.imag(coil_images)))
    total = gc.sum_axes(sq, 0)
    if eps:
        total = gc.add(total, gc.Tensor(np.asarray(eps, dtype=total.data.dtype)))
    return gc.sqrt(total)


# ---------------------------------------------------------------------------
# sampling masks
# ---------------------------------------------------------------------------

@dataclass
class SamplingMask:
    accept: np.ndarray   # (w,) bool, centered k-space column view
    accel: int
    n_center: int
    offset: int
    axis: str = "width"

    @property
    def w(self) -> int:
        return self.accept.shape[0]


def make_mask(w: int, accel: int, n_center: int, offset: int = 0) -> SamplingMask:
    """Equispaced acceptance pattern with a fully sampled center band.

    Columns c with c % accel == offset are accepted, plus the n_center
    consecutive columns around w/2 (centered view). n_center must be even.
    """
    if accel < 1:
        raise KSpaceError(f"acceleration must be >= 1, got {accel}")
    if not 0 <= offset < accel:
        raise KSpaceError(f"offset must be in [0, {accel}), got {offset}")
    if n_center >= w:
        raise KSpaceError(f"center band {n_center} must be smaller than width {w}")
    if n_center % 2:
        raise KSpaceError(f"center band must be even, got {n_center}")
    accept = (np.arange(w) % accel) == offset
    lo = w // 2 - n_center // 2
    accept[lo:lo + n_center] = True
    return SamplingMask(accept=accept, accel=accel, n_center=n_center, offset=offset)


def apply_mask(kspace, mask: SamplingMask) -> Tensor:
    """Zero rejected columns across all coils; accepted columns are
    bit-identical to the input. Differentiable."""
    kspace = gc.as_tensor(kspace)
    if kspace.shape[-1] != mask.w:
        raise KSpaceError(
            f"mask length {mask.w} does not match k-space width {kspace.shape[-1]}")
    return gc.mul(kspace, mask_weights(mask, kspace.ndim, kspace.dtype))


def mask_weights(mask: SamplingMask, ndim: int, dtype) -> Tensor:
    """0/1 mask as a constant tensor broadcastable over (.., h, w)."""
    wide = np.dtype(dtype) in (np.dtype(np.complex128), np.dtype(np.float64))
    vals = mask.accept.astype(np.float64 if wide else np.float32)
    return Tensor(vals.reshape((1,) * (ndim - 1) + (mask.w,)))


# ---------------------------------------------------------------------------
# slice file format (BNDSLICE1)
# ---------------------------------------------------------------------------

def write_slice(path, slc: KSpaceSlice) -> None:
    """Binary slice file: magic, header, then little-endian f32 planar
    arrays in order kspace.re, kspace.im, sens.re, sens.im, target."""
    n_c, h, w = slc.kspace.shape
    blob = bytearray()
    blob += SLICE_MAGIC
    blob += _HEADER.pack(n_c, h, w, slc.noise_sigma, slc.seed)
    for arr in (slc.kspace.real, slc.kspace.imag,
                slc.sens.maps.real, slc.sens.maps.imag, slc.target):
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_slice(path) -> KSpaceSlice:
    raw = Path(path).read_bytes()
    if raw[:len(SLICE_MAGIC)] != SLICE_MAGIC:
        raise KSpaceError(f"{path}: bad magic, not a BNDSLICE1 file")
    off = len(SLICE_MAGIC)
    n_c, h, w, sigma, seed = _HEADER.unpack_from(raw, off)
    off += _HEADER.size
    counts = [n_c * h * w] * 4 + [h * w]
    arrs = []
    for count in counts:
        nbytes = count * 4
        if off + nbytes > len(raw):
            raise KSpaceError(f"{path}: truncated payload")
        arrs.append(np.frombuffer(raw, dtype="<f4", count=count, offset=off))
        off += nbytes
    if off != len(raw):
        raise KSpaceError(f"{path}: trailing bytes after payload")
    kspace = (arrs[0] + 1j * arrs[1]).astype(np.complex64).reshape(n_c, h, w)
    maps = (arrs[2] + 1j * arrs[3]).astype(np.complex64).reshape(n_c, h, w)
    target = arrs[4].astype(np.float32).reshape(h, w)
    return KSpaceSlice(kspace=kspace, target=target,
                       sens=SensitivitySet(maps=maps, n_c=n_c),
                       noise_sigma=float(sigma), seed=int(seed))


def slice_paths(directory) -> list:
    return sorted(Path(directory).glob("slice_*.bndslice"))


def load_dataset(directory) -> list:
    paths = slice_paths(directory)
    if not paths:
        raise KSpaceError(f"no slice_*.bndslice files in {directory}")
    return [read_slice(p) for p in paths]
