"""Command-line entry point.

Subcommands: simulate (synthetic dataset), train (two-phase schedule,
optionally without the adversarial terms), reconstruct (checkpoint ->
16-bit PGM images + metrics CSV), dither (classical baseline over PGM
images), probe-banding (orientation-detectability probe), gradcheck
(finite-difference verification of the tensor engine).

Exit codes: 0 success, 1 usage, 2 runtime error, 3 numeric divergence.
Every run prints its resolved configuration. BNDLESS_THREADS caps the
worker/BLAS thread count (set it to 1 for bit-reproducible runs).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dither as dt
from . import gradcore
from . import kspace as ks
from . import metrics as mx
from . import models as md
from . import training as tr

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_NUMERIC = 3


# ---------------------------------------------------------------------------
# 16-bit PGM
# ---------------------------------------------------------------------------

PGM_MAXVAL = 65535


def write_pgm16(path, image: np.ndarray, window_max: float) -> None:
    """Binary 16-bit PGM (big-endian samples), contrast window [0, window_max]."""
    if window_max <= 0:
        raise ValueError(f"window_max must be positive, got {window_max}")
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    quant = np.clip(np.rint(np.clip(img / window_max, 0.0, 1.0) * PGM_MAXVAL),
                    0, PGM_MAXVAL).astype(">u2")
    header = f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + quant.tobytes())


def read_pgm16(path) -> np.ndarray:
    """Read a binary 16-bit PGM back to floats in [0, 1]."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != PGM_MAXVAL:
        raise ValueError(f"{path}: expected 16-bit maxval {PGM_MAXVAL}, got {maxval}")
    data = np.frombuffer(raw, dtype=">u2", count=h * w, offset=pos)
    return (data.reshape(h, w).astype(np.float64)) / maxval


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _echo(title: str, pairs: dict) -> None:
    print(f"resolved config ({title}):")
    for k, v in pairs.items():
        print(f"  {k} = {v}")


def _apply_thread_cap() -> None:
    cap = os.environ.get("BNDLESS_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise ValueError(f"BNDLESS_THREADS must be an integer, got {cap!r}")
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        pass
    print(f"thread cap: {n} (BNDLESS_THREADS)")


def _resolve_train_config(args) -> tr.TrainConfig:
    if args.preset == "paper":
        cfg = tr.TrainConfig.paper()
    elif args.preset == "desk":
        cfg = tr.TrainConfig.desk()
    else:
        cfg = tr.TrainConfig()
    if getattr(args, "config", None):
        cfg = tr.load_config(args.config, base=cfg)
    for item in getattr(args, "set", None) or []:
        cfg = tr.parse_config_text(item.replace("=", " = ", 1), base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.size < 32 or args.size & (args.size - 1):
        print(f"error: --size must be a power of two >= 32, got {args.size}",
              file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo("simulate", {"out": out, "slices": args.slices, "size": args.size,
                       "coils": args.coils, "sigma": args.sigma, "seed": args.seed,
                       "kind": args.kind})
    manifest = ["# bandless dataset manifest",
                f"slices = {args.slices}", f"size = {args.size}",
                f"coils = {args.coils}", f"sigma = {args.sigma}",
                f"base_seed = {args.seed}", f"kind = {args.kind}"]
    for i in range(args.slices):
        slice_seed = args.seed * 1_000_003 + i
        slc = ks.make_slice(slice_seed, args.size, args.size, args.coils,
                            args.sigma, kind=args.kind)
        ks.write_slice(out / f"slice_{i:04d}.bndslice", slc)
        manifest.append(f"slice_{i:04d}.bndslice seed={slice_seed}")
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    print(f"wrote {args.slices} slices to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    _echo("train", {**{f: getattr(cfg, f) for f in
                       ("pretrain_epochs", "adv_epochs", "lr_pretrain", "lr_adv",
                        "gamma", "batch_size", "accel", "n_center", "flip_prob",
                        "seed")},
                    "adversary": not args.no_adversary,
                    "data": args.data, "out": args.out})
    dataset = ks.load_dataset(args.data)
    _, log_path = tr.run_training(dataset, cfg, args.out,
                                  use_adversary=not args.no_adversary)
    print(f"training complete; log at {log_path}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    if args.format != "pgm":
        print(f"error: unsupported format {args.format!r}", file=sys.stderr)
        return EXIT_USAGE
    cfg = _resolve_train_config(args)
    _echo("reconstruct", {"ckpt": args.ckpt, "data": args.data, "out": args.out,
                          "format": args.format, "residual_gain": args.residual_gain,
                          "accel": cfg.accel, "n_center": cfg.n_center})
    params = md.load_checkpoint(args.ckpt)
    dataset = ks.load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, slc in enumerate(dataset):
        recon = mx.reconstruct_slice(slc, params, cfg, r=0, offset=0)
        window = float(slc.target.max())
        write_pgm16(out / f"recon_{i:04d}.pgm", recon, window)
        write_pgm16(out / f"target_{i:04d}.pgm", slc.target, window)
        residual = (recon.astype(np.float64) - slc.target) * args.residual_gain
        write_pgm16(out / f"residual_{i:04d}.pgm", np.abs(residual), window)
    report = mx.evaluate(params, dataset, cfg, seed=cfg.seed)
    report.to_csv(out / "metrics.csv")
    print(f"wrote {3 * len(dataset)} images and metrics.csv to {out}")
    print("metrics:", report.summary())
    return EXIT_OK


def cmd_dither(args) -> int:
    params = dt.DitherParams(alpha=args.alpha, noise_c=args.noise, seed=args.seed)
    params.validate()
    _echo("dither", {"in": args.in_dir, "out": args.out, "alpha": args.alpha,
                     "noise": args.noise, "seed": args.seed})
    in_dir = Path(args.in_dir)
    paths = sorted(in_dir.glob("*.pgm"))
    if not paths:
        print(f"error: no .pgm files in {in_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in paths:
        img = read_pgm16(p)
        result = dt.dither(img, params)
        write_pgm16(out / p.name, result, 1.0)
    print(f"dithered {len(paths)} images into {out}")
    return EXIT_OK


def cmd_probe_banding(args) -> int:
    cfg = _resolve_train_config(args)
    probe = mx.ProbeConfig(seed=args.seed, epochs=args.epochs,
                           mode=args.mode.replace("-", "_"))
    _echo("probe-banding", {"ckpt": args.ckpt, "data": args.data,
                            "seed": args.seed, "mode": args.mode,
                            "epochs": args.epochs})
    dataset = ks.load_dataset(args.data)
    ckpt = args.ckpt if probe.mode == "checkpoint" else None
    acc = mx.adversary_probe(ckpt, dataset, probe, train_cfg=cfg)
    print(f"probe accuracy = {acc:.4f} (seed {args.seed})")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcore.gradcheck import run_suite
    _echo("gradcheck", {"seeds": args.seeds})
    ok, rows = run_suite(seeds=args.seeds, verbose=True)
    if not ok:
        print("gradcheck FAILED", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"gradcheck passed: {len(rows)} cases")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandless",
        description="Banding suppression for accelerated MRI reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic slice dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--slices", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--coils", type=int, default=4)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("ellipses", "textured"), default="textured")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="run the two-phase training schedule")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=("default", "desk", "paper"), default="default")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-adversary", action="store_true",
                   help="identical schedule without the adversarial terms")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="write reconstructions as 16-bit PGM")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="pgm")
    p.add_argument("--residual-gain", type=float, default=5.0)
    p.add_argument("--config")
    p.add_argument("--preset", choices=("default", "desk", "paper"), default="desk")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("dither", help="classical blur+noise baseline over PGMs")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.125)
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dither)

    p = sub.add_parser("probe-banding", help="orientation-detectability probe")
    p.add_argument("--ckpt")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--mode", choices=("checkpoint", "zero-filled", "ground-truth"),
                   default="checkpoint")
    p.add_argument("--config")
    p.add_argument("--preset", choices=("default", "desk", "paper"), default="desk")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_probe_banding)

    p = sub.add_parser("gradcheck", help="finite-difference engine verification")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        _apply_thread_cap()
        return args.func(args)
    except (tr.TrainingDiverged, gradcore.NumericError, gradcore.DomainError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (tr.TrainingError, ks.KSpaceError, md.ModelError, mx.MetricsError,
            dt.DitherError, gradcore.GradcoreError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
