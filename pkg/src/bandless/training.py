"""Training procedure: flip-based orientation self-supervision, predictor
and adversary losses with the stop-gradient contract, simultaneous
same-minibatch ADAM updates, and the two-phase schedule (reconstruction
pretraining, then adversarial training).

The flip operator transposes the image axes of the raw k-space before
masking and reconstruction and transposes the output back, so the
comparison target never changes while the subsampling axis, relative to
the anatomy, does. The adversary classifies which orientation produced a
reconstruction; the predictor earns a bonus for fooling it.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradcore as gc
from . import kspace as ks
from . import models as md
from .gradcore import Tensor


class TrainingError(Exception):
    pass


class TrainingDiverged(TrainingError):
    """Raised when a step produces a non-finite loss."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Every schedule, loss, and architecture constant.

    Defaults follow the published training recipe; the model sizes default
    to the desk-scale reduction. Use desk() for a complete desk-scale run
    or paper() for full-scale settings.
    """

    pretrain_epochs: int = 100
    adv_epochs: int = 60
    lr_pretrain: float = 0.0003
    lr_adv: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    gamma: float = 0.1
    l1_weight: float = 0.01
    accel: int = 4
    n_center: int = 16
    flip_prob: float = 0.5
    seed: int = 0
    cascades: int = 3
    unet_channels: int = 8
    unet_pools: int = 2
    adv_stem_channels: int = 64
    adv_block1_channels: int = 64
    adv_block2_channels: int = 128
    adv_groups: int = 32
    adv_pool_window: int = 4
    adv_pool_kind: str = "max"
    penalty_on_logit: bool = False   # default differentiates the probability
    use_estimated_sens: bool = False
    checked: bool = False            # numeric guards off in timed runs

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(pretrain_epochs=10, adv_epochs=10, batch_size=4)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        base = dict(cascades=12, unet_channels=12, unet_pools=4)
        base.update(overrides)
        return cls(**base)

    def predictor_config(self) -> md.PredictorConfig:
        return md.PredictorConfig(cascades=self.cascades,
                                  unet_channels=self.unet_channels,
                                  unet_pools=self.unet_pools)

    def adversary_config(self) -> md.AdversaryConfig:
        return md.AdversaryConfig(stem_channels=self.adv_stem_channels,
                                  block1_channels=self.adv_block1_channels,
                                  block2_channels=self.adv_block2_channels,
                                  groups=self.adv_groups,
                                  pool_window=self.adv_pool_window,
                                  pool_kind=self.adv_pool_kind)

    def validate(self) -> None:
        for field in ("lr_pretrain", "lr_adv"):
            if getattr(self, field) <= 0:
                raise TrainingError(f"{field} must be positive")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise TrainingError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        self.adversary_config().validate()


_BOOL_FIELDS = {"penalty_on_logit", "use_estimated_sens", "checked"}


def format_config(cfg: TrainConfig) -> str:
    lines = ["# bandless training configuration"]
    for f in dataclasses.fields(TrainConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Flat "key = value" lines; '#' starts a comment; unknown keys rejected."""
    values = dataclasses.asdict(base) if base is not None else {}
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TrainingError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in fields:
            raise TrainingError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    return TrainConfig(**values)


def _parse_value(key: str, val: str):
    proto = getattr(TrainConfig(), key)
    if key in _BOOL_FIELDS or isinstance(proto, bool):
        if val.lower() in ("true", "1", "yes"):
            return True
        if val.lower() in ("false", "0", "no"):
            return False
        raise TrainingError(f"{key}: expected boolean, got {val!r}")
    if isinstance(proto, int):
        return int(val)
    if isinstance(proto, float):
        return float(val)
    return val


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def flip(x: Tensor) -> Tensor:
    """Transpose the trailing two axes. An involution; identity is r=0."""
    return gc.swap_last2(gc.as_tensor(x))


def ssim(a, b, data_range: float, window: int = 7) -> Tensor:
    """Mean local SSIM with a uniform window, valid-region aggregation,
    constants k1=0.01, k2=0.03. Differentiable in both images."""
    a, b = gc.as_tensor(a), gc.as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise TrainingError(f"ssim expects matching (h, w) images, got {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise TrainingError(f"data_range must be positive, got {data_range}")
    h, w = a.shape
    dt = a.data.dtype
    kern = Tensor(np.full((1, 1, window, window), 1.0 / window ** 2, dtype=dt))
    c1 = gc.Tensor(np.asarray((0.01 * data_range) ** 2, dtype=dt))
    c2 = gc.Tensor(np.asarray((0.03 * data_range) ** 2, dtype=dt))

    def win_mean(t):
        return gc.conv2d(gc.reshape(t, (1, h, w)), kern, padding="valid")

    mu_a = win_mean(a)
    mu_b = win_mean(b)
    e_aa = win_mean(gc.mul(a, a))
    e_bb = win_mean(gc.mul(b, b))
    e_ab = win_mean(gc.mul(a, b))
    var_a = gc.sub(e_aa, gc.square(mu_a))
    var_b = gc.sub(e_bb, gc.square(mu_b))
    cov = gc.sub(e_ab, gc.mul(mu_a, mu_b))
    two = gc.Tensor(np.asarray(2.0, dtype=dt))
    num = gc.mul(gc.add(gc.mul(two, gc.mul(mu_a, mu_b)), c1),
                 gc.add(gc.mul(two, cov), c2))
    den = gc.mul(gc.add(gc.add(gc.square(mu_a), gc.square(mu_b)), c1),
                 gc.add(gc.add(var_a, var_b), c2))
    return gc.mean_all(gc.div(num, den))


def l1_loss(a, b) -> Tensor:
    return gc.mean_all(gc.abs_(gc.sub(gc.as_tensor(a), gc.as_tensor(b))))


def ce_with_logit(logit: Tensor, label: float) -> Tensor:
    """Binary cross-entropy CE(label, sigmoid(logit)) via the stable
    log-sigmoid composition softplus(z) - label*z; finite for any finite z."""
    lab = Tensor(np.asarray(float(label), dtype=logit.data.dtype))
    return gc.sub(gc.softplus(logit), gc.mul(lab, logit))


def recon_loss(m_hat: Tensor, target: Tensor, data_range: float,
               l1_weight: float) -> Tensor:
    one = Tensor(np.asarray(1.0, dtype=m_hat.data.dtype))
    lw = Tensor(np.asarray(l1_weight, dtype=m_hat.data.dtype))
    return gc.add(gc.sub(one, ssim(m_hat, target, data_range)),
                  gc.mul(lw, l1_loss(m_hat, target)))


def predictor_loss(m_hat: Tensor, target: Tensor, r: int, params: md.ModelParams,
                   adv_cfg: md.AdversaryConfig, data_range: float,
                   l1_weight: float = 0.01, use_fool: bool = True):
    """Reconstruction loss plus the fool-the-adversary term CE(1-r, A(m_hat)).

    The adversary weights are frozen (detached) for this evaluation, so
    gradients flow through the adversary into m_hat and the predictor but
    the adversary parameters accumulate nothing.
    """
    rec = recon_loss(m_hat, target, data_range, l1_weight)
    if not use_fool:
        return rec, rec, None
    frozen = params.detached("adversary")
    logit = md.adversary_logit(m_hat, frozen, adv_cfg)
    fool = ce_with_logit(logit, 1.0 - r)
    return gc.add(rec, fool), rec, fool


def adversary_loss(m_hat_detached: Tensor, r: int, params: md.ModelParams,
                   adv_cfg: md.AdversaryConfig, gamma: float,
                   penalty_on_logit: bool = False):
    """CE toward the true orientation label plus gamma times the squared
    L2 norm of the adversary's input gradient (double backward).

    m_hat_detached must carry no history into the predictor; it is marked
    as a gradient target so the input gradient can be formed.
    """
    if m_hat_detached.node is not None:
        raise TrainingError("adversary_loss input must be detached (stop_gradient)")
    x = Tensor(m_hat_detached.data, requires_grad=True)
    logit = md.adversary_logit(x, params, adv_cfg)
    ce = ce_with_logit(logit, float(r))
    if gamma == 0.0:
        return ce, ce, None
    probe_out = logit if penalty_on_logit else gc.sigmoid(logit)
    grad_in = gc.backward(probe_out, create_graph=True, wrt=[x])[x]
    penalty = gc.sum_all(gc.square(grad_in))
    gam = Tensor(np.asarray(gamma, dtype=ce.data.dtype))
    return gc.add(ce, gc.mul(gam, penalty)), ce, penalty


# ---------------------------------------------------------------------------
# flip-wrapped reconstruction
# ---------------------------------------------------------------------------

def reconstruct_with_flip(slc: ks.KSpaceSlice, r: int, params: md.ModelParams,
                          config: TrainConfig, mask: ks.SamplingMask):
    """Transpose the raw k-space (r=1), mask along the fixed width axis,
    reconstruct, and transpose the output back. Returns (m_hat, target)
    where the target is always the untransposed ground truth."""
    n_c, h, w = slc.kspace.shape
    if r not in (0, 1):
        raise TrainingError(f"r must be 0 or 1, got {r}")
    if r == 1 and h != w:
        raise TrainingError(f"flip needs square slices, got {(h, w)}")
    kdata = slc.kspace.swapaxes(-1, -2) if r else slc.kspace
    smaps = slc.sens.maps.swapaxes(-1, -2) if r else slc.sens.maps
    masked_np = kdata * mask.accept[None, None, :].astype(kdata.real.dtype)
    if config.use_estimated_sens:
        sens = ks.estimate_sensitivities(masked_np, config.n_center)
        smaps = sens.maps.astype(kdata.dtype)
    m_hat = md.predictor_forward(Tensor(masked_np), mask, Tensor(smaps), params,
                                 config.predictor_config())
    if r:
        m_hat = flip(m_hat)
    return m_hat, Tensor(slc.target)


# ---------------------------------------------------------------------------
# ADAM
# ---------------------------------------------------------------------------

class AdamState:
    """Bias-corrected ADAM moments for one parameter namespace."""

    def __init__(self, named: dict):
        self.m = {n: np.zeros_like(t.data) for n, t in named.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in named.items()}
        self.t = 0

    def step(self, named: dict, grads: dict, lr: float, beta1: float,
             beta2: float, eps: float) -> None:
        self.t += 1
        bc1 = 1.0 - beta1 ** self.t
        bc2 = 1.0 - beta2 ** self.t
        for name, p in named.items():
            g_t = grads.get(p)
            g = np.zeros_like(p.data) if g_t is None else g_t.data.astype(p.data.dtype)
            m = self.m[name]
            v = self.v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * np.square(g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# steps and epochs
# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    recon_loss: float
    ce_fool_loss: float
    adv_ce_loss: float
    penalty_value: float
    r_value: float

    def check_finite(self, step: int) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise TrainingDiverged(f"step {step}: {f.name} is {v}")


def _mean(tensors: list) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = gc.add(total, t)
    return gc.mul(total, Tensor(np.asarray(1.0 / len(tensors), dtype=total.data.dtype)))


def _value(t) -> float:
    return 0.0 if t is None else float(t.data)


def train_step(batch: list, params: md.ModelParams, opt_pred: AdamState,
               opt_adv: AdamState, config: TrainConfig, step_index: int,
               adversarial: bool, lr: float | None = None) -> StepReport:
    """One simultaneous update of both models on the same minibatch.

    Per slice: sample the flip label and mask offset, reconstruct once,
    evaluate the predictor loss on m_hat and the adversary loss on a
    detached copy of the same m_hat, then apply one ADAM update to each
    namespace. Deterministic given (config.seed, step_index). lr overrides
    the predictor rate (run_training passes the phase rate).
    """
    if lr is None:
        lr = config.lr_adv if adversarial else config.lr_pretrain
    rng = np.random.default_rng([config.seed, 7, step_index])
    adv_cfg = config.adversary_config()
    pred_terms, rec_terms, fool_terms = [], [], []
    adv_terms, ce_terms, pen_terms = [], [], []
    labels = []
    for slc in batch:
        r = int(rng.random() < config.flip_prob)
        offset = int(rng.integers(config.accel))
        labels.append(r)
        mask = ks.make_mask(slc.kspace.shape[-1], config.accel, config.n_center, offset)
        m_hat, target = reconstruct_with_flip(slc, r, params, config, mask)
        data_range = float(target.data.max())
        total_b, rec, fool = predictor_loss(
            m_hat, target, r, params, adv_cfg, data_range,
            l1_weight=config.l1_weight, use_fool=adversarial)
        pred_terms.append(total_b)
        rec_terms.append(rec)
        if fool is not None:
            fool_terms.append(fool)
        if adversarial:
            total_a, ce, pen = adversary_loss(
                gc.stop_gradient(m_hat), r, params, adv_cfg, config.gamma,
                penalty_on_logit=config.penalty_on_logit)
            adv_terms.append(total_a)
            ce_terms.append(ce)
            if pen is not None:
                pen_terms.append(pen)

    loss_b = _mean(pred_terms)
    pred_named = params.namespace("predictor")
    grads_b = gc.backward(loss_b, wrt=list(pred_named.values()))

    grads_a = None
    adv_named = params.namespace("adversary")
    if adv_terms:
        loss_a = _mean(adv_terms)
        grads_a = gc.backward(loss_a, wrt=list(adv_named.values()))

    report = StepReport(
        recon_loss=float(_mean(rec_terms).data),
        ce_fool_loss=float(_mean(fool_terms).data) if fool_terms else 0.0,
        adv_ce_loss=float(_mean(ce_terms).data) if ce_terms else 0.0,
        penalty_value=float(_mean(pen_terms).data) if pen_terms else 0.0,
        r_value=float(np.mean(labels)),
    )
    report.check_finite(step_index)

    # updates happen only after both gradient computations
    opt_pred.step(pred_named, grads_b, lr,
                  config.beta1, config.beta2, config.adam_eps)
    if grads_a is not None:
        opt_adv.step(adv_named, grads_a, config.lr_adv,
                     config.beta1, config.beta2, config.adam_eps)
    return report


def run_training(dataset: list, config: TrainConfig, out_dir,
                 use_adversary: bool = True):
    """Two-phase training over a slice dataset.

    Phase 1 (pretraining) uses the reconstruction loss only, with random
    flips. Phase 2 adds the adversarial terms at the phase-2 learning rate;
    with use_adversary=False it runs the identical schedule without them
    (the "standard" baseline arm). Writes per-epoch checkpoints and a CSV
    step log; returns the final ModelParams.
    """
    if not dataset:
        raise TrainingError("dataset is empty")
    config.validate()
    gc.set_checked(config.checked)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config(config), encoding="utf-8")

    params = md.init_params(config.seed, config.predictor_config(),
                            config.adversary_config())
    opt_pred = AdamState(params.namespace("predictor"))
    opt_adv = AdamState(params.namespace("adversary"))

    log_path = out_dir / "train_log.csv"
    step = 0
    total_epochs = config.pretrain_epochs + config.adv_epochs
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "phase", "recon_loss", "ce_fool",
                         "adv_ce", "penalty", "label_r_mean"])
        for epoch in range(1, total_epochs + 1):
            pretrain = epoch <= config.pretrain_epochs
            adversarial = (not pretrain) and use_adversary
            phase = "pretrain" if pretrain else "adv"
            lr = config.lr_pretrain if pretrain else config.lr_adv
            order = np.random.default_rng([config.seed, 11, epoch]).permutation(len(dataset))
            for lo in range(0, len(dataset), config.batch_size):
                batch = [dataset[i] for i in order[lo:lo + config.batch_size]]
                report = train_step(batch, params, opt_pred, opt_adv, config,
                                    step, adversarial, lr=lr)
                writer.writerow([step, epoch, phase,
                                 repr(report.recon_loss), repr(report.ce_fool_loss),
                                 repr(report.adv_ce_loss), repr(report.penalty_value),
                                 repr(report.r_value)])
                step += 1
            fh.flush()
            md.save_checkpoint(params, out_dir / f"ckpt_epoch{epoch:03d}.bndckpt")
    md.save_checkpoint(params, out_dir / "final.bndckpt")
    return params, log_path
