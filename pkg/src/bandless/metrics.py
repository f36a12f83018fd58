"""Quantitative banding and fidelity metrics.

The reader-study evaluation of the source method is not reproducible at
desk scale; the declared computational proxy is the pair

* anisotropy_score: directional energy asymmetry of the reconstruction
  residual (positive = residual varies faster vertically, i.e. horizontal
  striping; see the CSV header comment written by EvalReport.to_csv), and
* adversary_probe: held-out accuracy of a freshly trained orientation
  classifier on a frozen model's reconstructions; 0.5 means orientation
  (and hence banding) is undetectable.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradcore as gc
from . import kspace as ks
from . import models as md
from . import training as tr
from .gradcore import Tensor


class MetricsError(Exception):
    pass


def _fsum_sq(arr: np.ndarray) -> float:
    """Order-independent (correctly rounded) sum of squares."""
    return math.fsum((arr.astype(np.float64) ** 2).ravel().tolist())


def anisotropy_score(recon: np.ndarray, target: np.ndarray) -> float:
    """Directional banding score of the residual, in [-1, 1].

    With r = recon - target and forward differences over the interior,
    score = (Ey - Ex) / (Ey + Ex + 1e-12) where Ex sums squared horizontal
    differences and Ey vertical ones. Exactly antisymmetric under joint
    transposition of both images.
    """
    recon = np.asarray(recon, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if recon.shape != target.shape or recon.ndim != 2:
        raise MetricsError(f"shape mismatch: {recon.shape} vs {target.shape}")
    r = recon - target
    ex = _fsum_sq(r[:, 1:] - r[:, :-1])
    ey = _fsum_sq(r[1:, :] - r[:-1, :])
    return (ey - ex) / (ey + ex + 1e-12)


def nmse(recon: np.ndarray, target: np.ndarray) -> float:
    recon = np.asarray(recon, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    denom = float(np.sum(target ** 2))
    return float(np.sum((recon - target) ** 2) / denom) if denom else float("inf")


def ssim_value(recon: np.ndarray, target: np.ndarray) -> float:
    data_range = float(np.max(target))
    with gc.no_grad():
        return float(tr.ssim(Tensor(np.asarray(recon, dtype=np.float64)),
                             Tensor(np.asarray(target, dtype=np.float64)),
                             data_range).data)


# ---------------------------------------------------------------------------
# whole-dataset evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    rows: list                      # per-slice dicts: ssim, l1, nmse, anisotropy_score
    means: dict = field(default_factory=dict)
    ci_low: dict = field(default_factory=dict)
    ci_high: dict = field(default_factory=dict)

    METRICS = ("ssim", "l1", "nmse", "anisotropy_score")

    def aggregate(self, seed: int = 0, resamples: int = 1000) -> "EvalReport":
        rng = np.random.default_rng([seed, 13])
        n = len(self.rows)
        for m in self.METRICS:
            vals = np.array([row[m] for row in self.rows])
            self.means[m] = float(vals.mean())
            idx = rng.integers(0, n, size=(resamples, n))
            boot = vals[idx].mean(axis=1)
            self.ci_low[m] = float(np.percentile(boot, 2.5))
            self.ci_high[m] = float(np.percentile(boot, 97.5))
        return self

    def to_csv(self, path) -> None:
        lines = [
            "# per-slice reconstruction metrics",
            "# anisotropy_score sign convention: positive = residual varies"
            " faster vertically (horizontal striping), negative = horizontal"
            " variation dominates",
            "slice," + ",".join(self.METRICS),
        ]
        for i, row in enumerate(self.rows):
            lines.append(f"{i}," + ",".join(repr(row[m]) for m in self.METRICS))
        lines.append("")
        lines.append("# aggregate mean [95% bootstrap CI]")
        for m in self.METRICS:
            lines.append(f"# {m}: {self.means[m]:.6f}"
                         f" [{self.ci_low[m]:.6f}, {self.ci_high[m]:.6f}]")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def summary(self) -> str:
        parts = [f"{m}={self.means[m]:.4f}" for m in self.METRICS]
        return f"n={len(self.rows)} " + " ".join(parts)


def reconstruct_slice(slc: ks.KSpaceSlice, params, config: tr.TrainConfig,
                      r: int = 0, offset: int = 0, mode: str = "checkpoint") -> np.ndarray:
    """Deterministic single-slice reconstruction used by evaluation and the
    probe. mode "zero_filled" bypasses the model (0-cascade pipeline);
    "ground_truth" returns the target unchanged."""
    if mode == "ground_truth":
        return slc.target.copy()
    mask = ks.make_mask(slc.kspace.shape[-1], config.accel, config.n_center, offset)
    cfg = config
    if mode == "zero_filled":
        cfg = dataclasses.replace(config, cascades=0)
        params = md.ModelParams({})
    elif mode != "checkpoint":
        raise MetricsError(f"unknown reconstruction mode {mode!r}")
    with gc.no_grad():
        m_hat, _ = tr.reconstruct_with_flip(slc, r, params, cfg, mask)
    return np.asarray(m_hat.data)


def evaluate(params_or_ckpt, dataset: list, config: tr.TrainConfig,
             seed: int = 0) -> EvalReport:
    """Run the predictor at r=0 on every slice and collect per-slice
    fidelity plus banding metrics with bootstrap aggregates."""
    params = _resolve_params(params_or_ckpt)
    rows = []
    for slc in dataset:
        recon = reconstruct_slice(slc, params, config, r=0, offset=0)
        rows.append({
            "ssim": ssim_value(recon, slc.target),
            "l1": float(np.mean(np.abs(recon.astype(np.float64)
                                       - slc.target.astype(np.float64)))),
            "nmse": nmse(recon, slc.target),
            "anisotropy_score": anisotropy_score(recon, slc.target),
        })
    return EvalReport(rows=rows).aggregate(seed=seed)


def _resolve_params(params_or_ckpt):
    if isinstance(params_or_ckpt, md.ModelParams):
        return params_or_ckpt
    if params_or_ckpt is None:
        return md.ModelParams({})
    return md.load_checkpoint(params_or_ckpt)


# ---------------------------------------------------------------------------
# orientation-adversary probe
# ---------------------------------------------------------------------------

@dataclass
class ProbeConfig:
    seed: int = 0
    epochs: int = 8
    batch_size: int = 8
    lr: float = 0.0005
    train_fraction: float = 0.75
    mode: str = "checkpoint"        # or "zero_filled" / "ground_truth"
    gamma: float = 0.0              # plain CE by default


def adversary_probe(frozen_ckpt, dataset: list, probe_cfg: ProbeConfig,
                    train_cfg: tr.TrainConfig | None = None) -> float:
    """Train a fresh orientation classifier on a frozen model's outputs.

    Both orientations of every slice are reconstructed once up front; the
    probe then learns to predict the orientation label and is scored on
    held-out slices (both orientations each, threshold 0.5). Accuracy near
    0.5 means reconstructions carry no orientation signal.
    """
    if len(dataset) < 50:
        raise MetricsError(f"probe needs at least 50 slices, got {len(dataset)}")
    train_cfg = train_cfg or tr.TrainConfig.desk()
    params = _resolve_params(frozen_ckpt) if probe_cfg.mode == "checkpoint" else md.ModelParams({})
    adv_cfg = train_cfg.adversary_config()

    n_train = int(round(len(dataset) * probe_cfg.train_fraction))
    n_train = min(max(n_train, 1), len(dataset) - 1)
    rng = np.random.default_rng([probe_cfg.seed, 17])

    # reconstruct both orientations once; offsets vary per slice like training
    def both(slc):
        offset = int(rng.integers(train_cfg.accel))
        return tuple(
            reconstruct_slice(slc, params, train_cfg, r=r, offset=offset,
                              mode=probe_cfg.mode).astype(np.float32)
            for r in (0, 1)
        )

    images = [both(slc) for slc in dataset]
    train_images = images[:n_train]
    test_images = images[n_train:]

    probe_params = md.init_params(probe_cfg.seed + 9000,
                                  md.PredictorConfig(cascades=0), adv_cfg)
    named = probe_params.namespace("adversary")
    opt = tr.AdamState(named)
    leaves = list(named.values())

    step = 0
    for epoch in range(probe_cfg.epochs):
        order = np.random.default_rng([probe_cfg.seed, 19, epoch]).permutation(n_train)
        for lo in range(0, n_train, probe_cfg.batch_size):
            batch = order[lo:lo + probe_cfg.batch_size]
            srng = np.random.default_rng([probe_cfg.seed, 23, step])
            terms = []
            for i in batch:
                r = int(srng.integers(2))
                x = Tensor(train_images[i][r])
                if probe_cfg.gamma > 0:
                    total, _, _ = tr.adversary_loss(x, r, probe_params, adv_cfg,
                                                    probe_cfg.gamma)
                else:
                    logit = md.adversary_logit(x, probe_params, adv_cfg)
                    total = tr.ce_with_logit(logit, float(r))
                terms.append(total)
            loss = terms[0]
            for t in terms[1:]:
                loss = gc.add(loss, t)
            loss = gc.mul(loss, Tensor(np.asarray(1.0 / len(terms),
                                                  dtype=loss.data.dtype)))
            grads = gc.backward(loss, wrt=leaves)
            opt.step(named, grads, probe_cfg.lr, train_cfg.beta1, train_cfg.beta2,
                     train_cfg.adam_eps)
            step += 1

    correct = 0
    with gc.no_grad():
        for pair in test_images:
            for r in (0, 1):
                logit = md.adversary_logit(Tensor(pair[r]), probe_params, adv_cfg)
                pred = int(float(logit.data) > 0.0)
                correct += int(pred == r)
    return correct / (2 * len(test_images))
