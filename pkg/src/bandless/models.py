"""Reconstruction predictor and orientation adversary.

The predictor is a scaled-down cascade of U-Nets with a soft
data-consistency step between cascades, finishing with inverse FFT and
root-sum-squares. The adversary is a shallow pre-activation ResNet with
GroupNorm that maps one reconstructed image to a probability that the
reconstruction ran in transposed orientation.

Parameters live in a flat name -> Tensor map split into "predictor/" and
"adversary/" namespaces; checkpoints serialize the map to the BNDCKPT1
binary format.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradcore as gc
from . import kspace as ks
from .gradcore import Tensor
from .gradcore.tensor import default_real_dtype


class ModelError(Exception):
    pass


CKPT_MAGIC = b"BNDCKPT1"


@dataclass
class PredictorConfig:
    cascades: int = 3            # paper-scale runs use 12
    unet_channels: int = 8       # paper-scale 12
    unet_pools: int = 2          # paper-scale 4


@dataclass
class AdversaryConfig:
    stem_channels: int = 64
    block1_channels: int = 64
    block2_channels: int = 128
    groups: int = 32
    pool_window: int = 4
    pool_kind: str = "max"       # "avg" available as the smooth alternative

    def validate(self) -> None:
        for ch in (self.stem_channels, self.block1_channels, self.block2_channels):
            g = min(self.groups, ch)
            if ch % g:
                raise ModelError(f"{ch} channels not divisible into {g} norm groups")
        if self.pool_kind not in ("max", "avg"):
            raise ModelError(f"unknown pool kind {self.pool_kind!r}")


class ModelParams:
    """Ordered name -> Tensor map with namespace helpers."""

    def __init__(self, tensors: dict):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise ModelError(f"missing parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list:
        return list(self.tensors)

    def namespace(self, prefix: str) -> dict:
        return {n: t for n, t in self.tensors.items() if n.startswith(prefix + "/")}

    def detached(self, prefix: str) -> "ModelParams":
        """Copy where the given namespace is value-identical but carries no
        gradient (used to freeze the adversary during the predictor loss)."""
        out = {}
        for n, t in self.tensors.items():
            out[n] = gc.stop_gradient(t) if n.startswith(prefix + "/") else t
        return ModelParams(out)


def _leaf(rng_or_array, shape=None, std=None) -> Tensor:
    if shape is None:
        data = np.asarray(rng_or_array, dtype=default_real_dtype())
    else:
        data = (rng_or_array.standard_normal(shape) * std).astype(default_real_dtype())
    return Tensor(data, requires_grad=True)


def _conv_block_params(rng, out: dict, prefix: str, cin: int, cout: int) -> None:
    out[f"{prefix}/conv0/weight"] = _leaf(rng, (cout, cin, 3, 3), math.sqrt(2.0 / (cin * 9)))
    out[f"{prefix}/conv0/bias"] = _leaf(np.zeros(cout))
    out[f"{prefix}/norm0/gain"] = _leaf(np.ones(cout))
    out[f"{prefix}/norm0/bias"] = _leaf(np.zeros(cout))
    out[f"{prefix}/conv1/weight"] = _leaf(rng, (cout, cout, 3, 3), math.sqrt(2.0 / (cout * 9)))
    out[f"{prefix}/conv1/bias"] = _leaf(np.zeros(cout))
    out[f"{prefix}/norm1/gain"] = _leaf(np.ones(cout))
    out[f"{prefix}/norm1/bias"] = _leaf(np.zeros(cout))


def _unet_level_channels(cfg: PredictorConfig) -> list:
    return [cfg.unet_channels * 2 ** i for i in range(cfg.unet_pools + 1)]


def _unet_params(rng, out: dict, prefix: str, cfg: PredictorConfig) -> None:
    chans = _unet_level_channels(cfg)
    cin = 2
    for i in range(cfg.unet_pools):
        _conv_block_params(rng, out, f"{prefix}/enc{i}", cin, chans[i])
        cin = chans[i]
    _conv_block_params(rng, out, f"{prefix}/bottleneck", cin, chans[-1])
    cin = chans[-1]
    for i in reversed(range(cfg.unet_pools)):
        _conv_block_params(rng, out, f"{prefix}/dec{i}", cin + chans[i], chans[i])
        cin = chans[i]
    out[f"{prefix}/out/weight"] = _leaf(rng, (2, cin, 1, 1), math.sqrt(2.0 / cin))
    out[f"{prefix}/out/bias"] = _leaf(np.zeros(2))


def _res_block_params(rng, out: dict, prefix: str, cin: int, cout: int) -> None:
    out[f"{prefix}/norm0/gain"] = _leaf(np.ones(cin))
    out[f"{prefix}/norm0/bias"] = _leaf(np.zeros(cin))
    out[f"{prefix}/conv0/weight"] = _leaf(rng, (cout, cin, 3, 3), math.sqrt(2.0 / (cin * 9)))
    out[f"{prefix}/conv0/bias"] = _leaf(np.zeros(cout))
    out[f"{prefix}/norm1/gain"] = _leaf(np.ones(cout))
    out[f"{prefix}/norm1/bias"] = _leaf(np.zeros(cout))
    out[f"{prefix}/conv1/weight"] = _leaf(rng, (cout, cout, 3, 3), math.sqrt(2.0 / (cout * 9)))
    out[f"{prefix}/conv1/bias"] = _leaf(np.zeros(cout))
    if cin != cout:
        out[f"{prefix}/proj/weight"] = _leaf(rng, (cout, cin, 1, 1), math.sqrt(2.0 / cin))


def init_params(seed: int, pred_cfg: PredictorConfig,
                adv_cfg: AdversaryConfig) -> ModelParams:
    """He fan-in normal conv weights, zero biases, unit norm gains, and
    data-consistency weights starting at 1. Deterministic per seed."""
    adv_cfg.validate()
    rng = np.random.default_rng([seed, 5])
    out: dict = {}
    for c in range(pred_cfg.cascades):
        _unet_params(rng, out, f"predictor/cascade{c}/unet", pred_cfg)
        out[f"predictor/cascade{c}/dc_weight"] = _leaf(np.ones(1))
    out["adversary/stem/weight"] = _leaf(rng, (adv_cfg.stem_channels, 1, 3, 3),
                                         math.sqrt(2.0 / 9))
    out["adversary/stem/bias"] = _leaf(np.zeros(adv_cfg.stem_channels))
    _res_block_params(rng, out, "adversary/block0", adv_cfg.stem_channels,
                      adv_cfg.block1_channels)
    _res_block_params(rng, out, "adversary/block1", adv_cfg.block1_channels,
                      adv_cfg.block1_channels)
    _res_block_params(rng, out, "adversary/block2", adv_cfg.block1_channels,
                      adv_cfg.block2_channels)
    _res_block_params(rng, out, "adversary/block3", adv_cfg.block2_channels,
                      adv_cfg.block2_channels)
    out["adversary/head/weight"] = _leaf(rng, (adv_cfg.block2_channels,),
                                         math.sqrt(2.0 / adv_cfg.block2_channels))
    out["adversary/head/bias"] = _leaf(np.zeros(1))
    return ModelParams(out)


# ---------------------------------------------------------------------------
# U-Net predictor
# ---------------------------------------------------------------------------

def _norm_groups(channels: int) -> int:
    return math.gcd(channels, 8)


def _conv_block(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    for i in range(2):
        x = gc.conv2d(x, params[f"{prefix}/conv{i}/weight"],
                      params[f"{prefix}/conv{i}/bias"], padding="same")
        ch = x.shape[0]
        x = gc.group_norm(x, _norm_groups(ch), params[f"{prefix}/norm{i}/gain"],
                          params[f"{prefix}/norm{i}/bias"])
        x = gc.leaky_relu(x, 0.2)
    return x


def upsample_nearest2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsample of a (c, h, w) tensor."""
    c, h, w = x.shape
    x = gc.reshape(x, (c, h, 1, w, 1))
    x = gc.expand(x, (c, h, 2, w, 2))
    return gc.reshape(x, (c, 2 * h, 2 * w))


def unet_forward(x: Tensor, params: ModelParams, prefix: str,
                 cfg: PredictorConfig) -> Tensor:
    _, h, w = x.shape
    div = 2 ** cfg.unet_pools
    if h % div or w % div:
        raise ModelError(f"image extents {(h, w)} not divisible by {div}")
    skips = []
    for i in range(cfg.unet_pools):
        x = _conv_block(x, params, f"{prefix}/enc{i}")
        skips.append(x)
        x = gc.avgpool2d(x, 2)
    x = _conv_block(x, params, f"{prefix}/bottleneck")
    for i in reversed(range(cfg.unet_pools)):
        x = upsample_nearest2(x)
        x = gc.concat([x, skips[i]], axis=0)
        x = _conv_block(x, params, f"{prefix}/dec{i}")
    return gc.conv2d(x, params[f"{prefix}/out/weight"], params[f"{prefix}/out/bias"],
                     padding="same")


def _sens_reduce(k: Tensor, sens: Tensor) -> Tensor:
    """Multi-coil k-space -> single complex image via conjugate maps."""
    return gc.sum_axes(gc.mul(gc.conj(sens), ks.ifft2c(k)), 0)


def _sens_expand(img: Tensor, sens: Tensor) -> Tensor:
    """Single complex image -> multi-coil k-space."""
    return ks.fft2c(gc.mul(sens, img))


def predictor_forward(masked_kspace, mask: ks.SamplingMask, sens,
                      params: ModelParams, cfg: PredictorConfig) -> Tensor:
    """Reconstruct a real (h, w) image from masked multi-coil k-space.

    Each cascade refines the k-space estimate with a U-Net operating on the
    sensitivity-combined complex image (real/imag as channels) and then
    applies the soft data-consistency step
        k <- k - dc_weight * mask * (k - x0),
    written in the algebraically equal form k*(1 - dc*mask) + dc*mask*x0 so
    the dc_weight = 1 limit reproduces acquired columns exactly.
    """
    k = gc.as_tensor(masked_kspace)
    sens_t = gc.as_tensor(sens.maps if isinstance(sens, ks.SensitivitySet) else sens)
    if k.ndim != 3:
        raise ModelError(f"masked k-space must be (n_c, h, w), got {k.shape}")
    if sens_t.shape != k.shape:
        raise ModelError(f"sensitivity shape {sens_t.shape} != k-space {k.shape}")
    n_c, h, w = k.shape
    if mask.w != w:
        raise ModelError(f"mask length {mask.w} does not match width {w}")
    div = 2 ** cfg.unet_pools
    if h % div or w % div:
        raise ModelError(f"extents {(h, w)} not divisible by 2^pools = {div}")

    x0 = k
    mw = ks.mask_weights(mask, 3, k.data.dtype)
    one = Tensor(np.asarray(1.0, dtype=mw.data.dtype))
    for c in range(cfg.cascades):
        img = _sens_reduce(k, sens_t)
        ch2 = gc.concat([gc.reshape(gc.real(img), (1, h, w)),
                         gc.reshape(gc.imag(img), (1, h, w))], axis=0)
        upd = unet_forward(ch2, params, f"predictor/cascade{c}/unet", cfg)
        upd_c = gc.to_complex(gc.reshape(gc.narrow(upd, 0, 0, 1), (h, w)),
                              gc.reshape(gc.narrow(upd, 0, 1, 1), (h, w)))
        refinement = _sens_expand(upd_c, sens_t)
        lam = params[f"predictor/cascade{c}/dc_weight"]
        keep = gc.sub(one, gc.mul(lam, mw))
        k = gc.sub(gc.add(gc.mul(k, keep), gc.mul(gc.mul(lam, mw), x0)), refinement)
    return ks.rss(ks.ifft2c(k), eps=1e-12)


# ---------------------------------------------------------------------------
# orientation adversary
# ---------------------------------------------------------------------------

def _res_block(x: Tensor, params: ModelParams, prefix: str,
               cfg: AdversaryConfig) -> Tensor:
    cin = x.shape[0]
    h1 = gc.relu(gc.group_norm(x, min(cfg.groups, cin),
                               params[f"{prefix}/norm0/gain"],
                               params[f"{prefix}/norm0/bias"]))
    proj_name = f"{prefix}/proj/weight"
    shortcut = gc.conv2d(h1, params[proj_name], padding="same") if proj_name in params else x
    y = gc.conv2d(h1, params[f"{prefix}/conv0/weight"],
                  params[f"{prefix}/conv0/bias"], padding="same")
    cout = y.shape[0]
    h2 = gc.relu(gc.group_norm(y, min(cfg.groups, cout),
                               params[f"{prefix}/norm1/gain"],
                               params[f"{prefix}/norm1/bias"]))
    y = gc.conv2d(h2, params[f"{prefix}/conv1/weight"],
                  params[f"{prefix}/conv1/bias"], padding="same")
    return gc.add(shortcut, y)


def _pool(x: Tensor, cfg: AdversaryConfig) -> Tensor:
    if cfg.pool_kind == "max":
        return gc.maxpool2d(x, cfg.pool_window)
    return gc.avgpool2d(x, cfg.pool_window)


def adversary_logit(image, params: ModelParams, cfg: AdversaryConfig) -> Tensor:
    """Raw score before the sigmoid; the training losses consume this for
    numerically stable cross-entropy."""
    x = gc.as_tensor(image)
    if x.ndim != 2:
        raise ModelError(f"adversary input must be (h, w), got {x.shape}")
    h, w = x.shape
    div = cfg.pool_window ** 2
    if h < 64 or w < 64:
        raise ModelError(f"adversary needs at least 64x64 input, got {(h, w)}")
    if h % div or w % div:
        raise ModelError(f"extents {(h, w)} not divisible by {div}")
    x = gc.reshape(x, (1, h, w))
    x = gc.conv2d(x, params["adversary/stem/weight"], params["adversary/stem/bias"],
                  padding="same")
    x = _res_block(x, params, "adversary/block0", cfg)
    x = _res_block(x, params, "adversary/block1", cfg)
    x = _pool(x, cfg)
    x = _res_block(x, params, "adversary/block2", cfg)
    x = _res_block(x, params, "adversary/block3", cfg)
    x = _pool(x, cfg)
    x = gc.mean_axes(x, (1, 2))          # global average pool to (channels,)
    x = gc.relu(x)
    score = gc.sum_all(gc.mul(x, params["adversary/head/weight"]))
    return gc.add(score, gc.reshape(params["adversary/head/bias"], ()))


def adversary_forward(image, params: ModelParams, cfg: AdversaryConfig) -> Tensor:
    """Probability in (0, 1) that the input was reconstructed transposed."""
    return gc.sigmoid(adversary_logit(image, params, cfg))


# ---------------------------------------------------------------------------
# checkpoints (BNDCKPT1)
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Manifest of "name f32 shape" lines, blank line, then raw little-endian
    f32 payloads in manifest order. Written atomically."""
    lines = []
    payload = bytearray()
    for name, t in params.tensors.items():
        shape = "x".join(str(s) for s in t.shape)
        lines.append(f"{name} f32 {shape}")
        payload += np.ascontiguousarray(t.data, dtype="<f4").tobytes()
    blob = CKPT_MAGIC + ("\n".join(lines) + "\n\n").encode("utf-8") + bytes(payload)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ModelError(f"{path}: bad magic, not a BNDCKPT1 file")
    body = raw[len(CKPT_MAGIC):]
    sep = body.find(b"\n\n")
    if sep < 0:
        raise ModelError(f"{path}: missing manifest terminator")
    manifest = body[:sep].decode("utf-8").splitlines()
    payload = body[sep + 2:]
    tensors: dict = {}
    off = 0
    for line in manifest:
        fields = line.split()
        if len(fields) != 3 or fields[1] != "f32":
            raise ModelError(f"{path}: malformed manifest line {line!r}")
        name, _, shape_s = fields
        shape = tuple(int(s) for s in shape_s.split("x")) if shape_s else ()
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if off + nbytes > len(payload):
            raise ModelError(f"{path}: payload shorter than manifest for {name!r}")
        data = np.frombuffer(payload, dtype="<f4", count=count, offset=off).reshape(shape)
        tensors[name] = Tensor(data.copy(), requires_grad=True)
        off += nbytes
    if off != len(payload):
        raise ModelError(f"{path}: trailing bytes after declared payload")
    return ModelParams(tensors)
