"""Command-line interface.

Every command writes `<out>.manifest.json` next to its primary output.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
from dataclasses import replace
import json
import logging
import os
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, wavelet
from .imagecore import (
    Image,
    ImageFormatError,
    PatchSpec,
    atomic_write,
    crop_to_multiple,
    encode_image,
    load_image,
    save_image,
)
from .metrics import MetricReport, evaluate_pair
from .pipeline import ScaleMismatchError, baseline_bicubic, baseline_dwt_sr, super_resolve
from .resample import DivisibilityError, degrade, upscale
from .training import (
    CheckpointError,
    DatasetError,
    TrainConfig,
    TrainingDivergence,
    finetune,
    load_checkpoint,
    make_dataset,
    parse_config,
    save_checkpoint,
    train,
)
from .training.trainer import ArchitectureMismatch

log = logging.getLogger("twistsr")

SIDECAR_MAGIC = b"TWSB"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    """Bad arguments or configuration (exit code 1)."""


class DataError(Exception):
    """Problems with input data (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# sidecar: raw float64 subbands
# ---------------------------------------------------------------------------

def encode_sidecar(bands: wavelet.SubbandSet) -> bytes:
    """b"TWSB", u32 version, u32 channels, u32 band height, u32 band width, then
    float64 LE samples for LL, LH, HL, HH, each (channels, h, w)."""
    stacked = np.stack(tuple(bands))
    c, h, w = stacked.shape[1:]
    return SIDECAR_MAGIC + struct.pack("<IIII", 1, c, h, w) + stacked.astype("<f8").tobytes()


def decode_sidecar(raw: bytes) -> wavelet.SubbandSet:
    if raw[:4] != SIDECAR_MAGIC or len(raw) < 20:
        raise DataError("not a subband sidecar file")
    version, c, h, w = struct.unpack_from("<IIII", raw, 4)
    if version != 1:
        raise DataError(f"unsupported sidecar version {version}")
    n = 4 * c * h * w
    if len(raw) != 20 + 8 * n:
        raise DataError("truncated subband sidecar")
    arr = np.frombuffer(raw, dtype="<f8", offset=20, count=n).reshape(4, c, h, w).astype(np.float64)
    return wavelet.SubbandSet(*arr)


def visualize_band(band: np.ndarray) -> Image:
    """Per-band affine map to [0, 255]; constant bands become 0."""
    lo, hi = float(band.min()), float(band.max())
    if hi == lo:
        return Image(np.zeros_like(band))
    return Image((band - lo) * (255.0 / (hi - lo)))


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _manifest_path(out: str | os.PathLike) -> Path:
    return Path(f"{out}.manifest.json")


def write_manifest(args, started: float, inputs: list[str], outputs: list[str],
                   config: dict | None = None) -> None:
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "argv", "resolved_config")}
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "resolved": resolved,
        "config": config,
        "seed": (config or {}).get("seed", getattr(args, "seed", None)),
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": __version__,
        "duration_s": round(time.time() - started, 3),
    }
    atomic_write(_manifest_path(args.out), json.dumps(manifest, indent=2, default=str).encode())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load(path) -> Image:
    try:
        return load_image(path)
    except ImageFormatError as exc:
        raise DataError(str(exc)) from exc


def cmd_dwt(args) -> list[str]:
    img = _load(args.input)
    if img.height % 2 or img.width % 2:
        raise DataError(f"DWT needs even dimensions, got {img.width}x{img.height}")
    bands = wavelet.dwt2d(img.data)
    outputs = []
    prefix = str(args.out)
    payloads = {f"{prefix}.bands": encode_sidecar(bands)}
    for name, band in zip(("ll", "lh", "hl", "hh"), bands):
        vis = Image(np.stack([visualize_band(band[c]).plane() for c in range(band.shape[0])]))
        payloads[f"{prefix}_{name}.png"] = encode_image(vis, "png")
    for path, payload in payloads.items():
        atomic_write(path, payload)
        outputs.append(path)
    return outputs


def cmd_idwt(args) -> list[str]:
    try:
        raw = Path(args.input).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc.strerror}") from exc
    img = Image(wavelet.idwt2d(decode_sidecar(raw)))
    save_image(img, args.out)
    return [str(args.out)]


def _need_scale(args) -> int:
    if args.scale is None:
        raise UsageError("--scale is required")
    return args.scale


def cmd_downscale(args) -> list[str]:
    s = _need_scale(args)
    img = _load(args.input)
    if args.crop:
        img = crop_to_multiple(img, 2 * s)
    try:
        out = degrade(img, s)
    except DivisibilityError as exc:
        raise DataError(f"{exc} (use --crop to center-crop)") from exc
    save_image(out, args.out)
    return [str(args.out)]


def cmd_upscale(args) -> list[str]:
    s = _need_scale(args)
    save_image(upscale(_load(args.input), s), args.out)
    return [str(args.out)]


def cmd_baseline(args) -> list[str]:
    s = _need_scale(args)
    img = _load(args.input)
    if args.method == "bicubic":
        out = baseline_bicubic(img, s)
    elif args.method == "dwt":
        try:
            out = baseline_dwt_sr(img, s)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
    else:
        raise UsageError(f"unknown method {args.method!r}")
    save_image(out, args.out)
    return [str(args.out)]


def _train_config(args) -> TrainConfig:
    base = TrainConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from exc
        try:
            base = parse_config(text)
        except (ValueError, TypeError) as exc:
            raise UsageError(f"config error: {exc}") from exc
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scale is not None:
        overrides["scale"] = args.scale
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    config = replace(base, **overrides)
    problems = config.validate()
    if problems:
        raise UsageError("config validation failed: " + "; ".join(problems))
    return config


def _dataset(args, config: TrainConfig):
    spec = PatchSpec(config.patch_size, config.patches_per_image, config.seed, "uniform-random")
    try:
        return make_dataset(args.hr_dir, config.scale, spec, luminance=args.luminance)
    except (DatasetError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _write_training(args, result) -> list[str]:
    loss_path = args.loss_csv or f"{args.out}.loss.csv"
    result.write_curve(loss_path)
    save_checkpoint(result.checkpoint, args.out)
    return [str(args.out), str(loss_path)]


def cmd_train(args) -> list[str]:
    config = _train_config(args)
    args.resolved_config = config.flat()
    samples = _dataset(args, config)
    return _write_training(args, train(samples, config))


def cmd_finetune(args) -> list[str]:
    config = _train_config(args)
    args.resolved_config = config.flat()
    parent = _load_ckpt(args.parent)
    samples = _dataset(args, config)
    try:
        result = finetune(parent, samples, config)
    except ArchitectureMismatch as exc:
        raise UsageError(str(exc)) from exc
    return _write_training(args, result)


def _load_ckpt(path):
    if not Path(path).exists():
        raise DataError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_sr(args) -> list[str]:
    s = _need_scale(args)
    ckpt = _load_ckpt(args.checkpoint)
    img = _load(args.input)
    try:
        out = super_resolve(img, ckpt, s)
    except ScaleMismatchError as exc:
        raise UsageError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    save_image(out, args.out)
    return [str(args.out)]


def _images_by_stem(directory) -> dict[str, Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in (".png", ".pgm")}


def cmd_eval(args) -> list[str]:
    hr = _images_by_stem(args.hr_dir)
    if not hr:
        raise DataError(f"no images in {args.hr_dir}")
    report = MetricReport(mode="luminance" if args.luminance else "rgb")
    if args.sr_dir:
        sr = _images_by_stem(args.sr_dir)
        for stem in sorted(set(hr) ^ set(sr)):
            side = "sr" if stem in sr else "hr"
            report.errors.append({"name": stem, "error": f"unmatched: only present in {side} directory"})
        for stem in sorted(set(hr) & set(sr)):
            try:
                x, h = _load(hr[stem]), _load(sr[stem])
                report.add(evaluate_pair(x, h, args.luminance, stem, args.scale))
            except (DataError, ValueError) as exc:
                report.errors.append({"name": stem, "error": str(exc)})
    elif args.checkpoint:
        s = _need_scale(args)
        ckpt = _load_ckpt(args.checkpoint)
        bicubic = MetricReport(mode=report.mode)
        for stem, path in hr.items():
            try:
                x = crop_to_multiple(_load(path), 2 * s)
                lr = degrade(x, s)
                report.add(evaluate_pair(x, super_resolve(lr, ckpt, s), args.luminance, stem, s))
                bicubic.add(evaluate_pair(x, baseline_bicubic(lr, s), args.luminance, stem, s))
            except (DataError, ValueError) as exc:
                report.errors.append({"name": stem, "error": str(exc)})
        if report.records:
            key = str(s)
            model_psnr = report.aggregate()[key]["psnr"]
            bic_psnr = bicubic.aggregate()[key]["psnr"]
            report.extra["bicubic_aggregate"] = bicubic.aggregate()
            report.extra["psnr_delta_vs_bicubic"] = model_psnr - bic_psnr
    else:
        raise UsageError("eval needs --sr-dir or --checkpoint")
    json_path, csv_path = f"{args.out}.json", f"{args.out}.csv"
    atomic_write(json_path, report.to_json().encode())
    atomic_write(csv_path, report.to_csv().encode())
    for err in report.errors:
        log.warning("%s: %s", err["name"], err["error"])
    return [json_path, csv_path]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--scale", type=int, choices=(2, 3, 4), default=None)
    common.add_argument("--luminance", action=argparse.BooleanOptionalAction, default=True,
                        help="compute metrics / train on BT.601 luminance (default on)")
    common.add_argument("--config", default=None, help="flat key = value training config")
    common.add_argument("--out", required=True, help="output path or prefix")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="twistsr", description="Wavelet-domain single-image super-resolution")
    parser.add_argument("--version", action="version", version=f"twistsr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dwt", parents=[common], help="single-level Haar DWT of an image")
    p.add_argument("input")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("idwt", parents=[common], help="invert a .bands sidecar to an image")
    p.add_argument("input")
    p.set_defaults(func=cmd_idwt)

    p = sub.add_parser("downscale", parents=[common], help="bicubic degradation by --scale")
    p.add_argument("input")
    p.add_argument("--crop", action="store_true", help="center-crop to a multiple of 2*scale first")
    p.set_defaults(func=cmd_downscale)

    p = sub.add_parser("upscale", parents=[common], help="bicubic upscaling by --scale")
    p.add_argument("input")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("baseline", parents=[common], help="non-learned SR baselines")
    p.add_argument("input")
    p.add_argument("--method", required=True, help="bicubic or dwt")
    p.set_defaults(func=cmd_baseline)

    for name, func in (("train", cmd_train), ("finetune", cmd_finetune)):
        p = sub.add_parser(name, parents=[common], help=f"{name} a generator on a directory of HR images")
        p.add_argument("hr_dir")
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--loss-csv", default=None)
        if name == "finetune":
            p.add_argument("--parent", required=True, help="pretrained checkpoint")
        p.set_defaults(func=func)

    p = sub.add_parser("sr", parents=[common], help="super-resolve an LR image")
    p.add_argument("input")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM/UIQ/MSE report")
    p.add_argument("hr_dir")
    p.add_argument("--sr-dir", default=None)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        outputs = args.func(args)
        inputs = [v for k, v in vars(args).items()
                  if k in ("input", "hr_dir", "sr_dir", "checkpoint", "parent", "config") and v]
        write_manifest(args, started, inputs, outputs, getattr(args, "resolved_config", None))
    except UsageError as exc:
        print(f"twistsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"twistsr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ImageFormatError, DatasetError, CheckpointError, OSError) as exc:
        print(f"twistsr: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def replay(manifest_path: str | os.PathLike) -> int:
    """Re-run the command recorded in a manifest."""
    manifest = json.loads(Path(manifest_path).read_text())
    return main(manifest["argv"])


if __name__ == "__main__":
    sys.exit(main())
