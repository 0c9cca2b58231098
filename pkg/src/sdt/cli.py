"""Command-line entry point: ``sdt {encode,decode,eval,synth,bench}``.

Exit codes: 0 success, 1 processing error, 2 bad arguments. Errors go to
standard error. Every command is a thin wrapper over a library call.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .decode import DecodeParams, decode_boundary, decode_sdt, decode_ss
from .metrics import evaluate, summary_line, write_report_csv
from .raster import (
    BACKGROUND,
    BinaryMask,
    EnergyMap,
    energy_paths,
    read_energy_map,
    read_label_map,
    write_energy_map,
    write_label_map,
)
from .representations import (
    DEFAULT_ALPHA,
    DEFAULT_BINS,
    DEFAULT_SIGMA,
    QuantParams,
    SdtParams,
    boundary_energy,
    dequantize,
    encode_dt,
    encode_sdt,
    encode_ss,
    quantize,
    read_scales,
    write_scales,
)
from .synth import dump_config, generate, load_scene_spec, read_config

REPRS = ("sdt", "dt", "boundary", "ss")


class UsageError(Exception):
    """Bad arguments detected after parsing; maps to exit code 2."""


def meta_path(base) -> Path:
    """Representation metadata written next to an encoded raster."""
    raster, _ = energy_paths(base)
    return raster.with_suffix(".meta.json")


def _positive(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _nonneg(s: str) -> float:
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _unit_open(s: str) -> float:
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


def _pos_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


# -- commands ----------------------------------------------------------------------


def encode_file(src, out, repr_: str = "sdt", alpha: float = DEFAULT_ALPHA, sigma: float = DEFAULT_SIGMA, bins: int | None = None) -> None:
    labels = read_label_map(src)
    params = SdtParams(alpha=alpha, sigma=sigma)
    info: dict = {"repr": repr_}
    if repr_ == "ss":
        write_scales(encode_ss(labels, params), out)
        info["convention"] = "skeleton scale per pixel, -1 off the skeleton"
    else:
        if repr_ == "sdt":
            energy = encode_sdt(labels, params)
        elif repr_ == "dt":
            energy = encode_dt(labels, normalize=True)
            info["normalized"] = True
        else:
            energy = boundary_energy(labels)
            info["convention"] = "0 on boundary pixels, 1 on other foreground, -1 background"
        if bins:
            q = QuantParams(bins)
            energy = dequantize(quantize(energy, q), q)
        meta = dict(energy.meta)
        meta["bins"] = bins
        meta["alpha"] = alpha if repr_ == "sdt" else None
        write_energy_map(EnergyMap(energy.values, meta), out)
    meta_path(out).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def decode_file(src, out, theta: float = 0.7, min_size: int = 16, fill_holes: bool = True) -> None:
    params = DecodeParams(theta, min_size, fill_holes)
    mp = meta_path(src)
    repr_ = json.loads(mp.read_text(encoding="utf-8")).get("repr", "sdt") if mp.is_file() else "sdt"
    if repr_ == "ss":
        labels = decode_ss(read_scales(src), params)
    else:
        energy = read_energy_map(src)
        if repr_ == "boundary":
            v = energy.values
            fg = v != BACKGROUND
            labels = decode_boundary(BinaryMask(fg & (v < 0.5)), BinaryMask(fg), params)
        elif repr_ in ("sdt", "dt"):
            labels = decode_sdt(energy, params)
        else:
            raise ValueError(f"{mp}: unknown representation {repr_!r}")
    write_label_map(labels, out)


def _cmd_encode(a) -> int:
    if a.bins is not None and a.repr in ("ss",):
        raise UsageError("--bins applies only to energy representations (sdt, dt, boundary)")
    encode_file(a.inp, a.out, a.repr, a.alpha, a.sigma, a.bins)
    return 0


def _cmd_decode(a) -> int:
    decode_file(a.inp, a.out, a.theta, a.min_size, not a.no_fill_holes)
    return 0


def _cmd_eval(a) -> int:
    pred, gt = read_label_map(a.pred), read_label_map(a.gt)
    rep = evaluate(pred, gt, a.iou)
    if a.out:
        write_report_csv([(Path(a.pred).name, rep)], a.out)
    print(summary_line(rep))
    return 0


def _cmd_synth(a) -> int:
    spec = load_scene_spec(a.config)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_label_map(generate(spec), out / "labels.png")
    dump_config(spec, out / "scene.cfg")
    return 0


def _cmd_bench(a) -> int:
    raw = read_config(a.config) if a.config else {}
    try:
        cfg = bench.bench_config_from(raw)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if a.jobs is not None:
        cfg = replace(cfg, jobs=a.jobs)
    bench.run_bench(a.suite, cfg, a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdt", description="Skeleton-aware distance transform toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", metavar="{encode,decode,eval,synth,bench}")
    sub.required = True

    e = sub.add_parser("encode", help="label PNG -> energy raster + sidecar")
    e.add_argument("--in", dest="inp", required=True, help="16-bit label PNG")
    e.add_argument("--out", required=True, help="output base path (writes BASE.f32, BASE.json, BASE.meta.json)")
    e.add_argument("--repr", choices=REPRS, default="sdt")
    e.add_argument("--alpha", type=_positive, default=DEFAULT_ALPHA)
    e.add_argument("--sigma", type=_nonneg, default=DEFAULT_SIGMA)
    e.add_argument("--bins", type=_pos_int, default=None, help=f"quantize/dequantize into K bins (usual K={DEFAULT_BINS})")
    e.set_defaults(fn=_cmd_encode)

    d = sub.add_parser("decode", help="energy raster -> label PNG")
    d.add_argument("--in", dest="inp", required=True, help="energy base path")
    d.add_argument("--out", required=True, help="output label PNG")
    d.add_argument("--theta", type=_unit_open, default=0.7)
    d.add_argument("--min-size", type=_nonneg_int, default=16)
    d.add_argument("--no-fill-holes", action="store_true")
    d.set_defaults(fn=_cmd_decode)

    v = sub.add_parser("eval", help="object-level metrics of a prediction against ground truth")
    v.add_argument("--pred", required=True)
    v.add_argument("--gt", required=True)
    v.add_argument("--out", default=None, help="report CSV (metadata goes to a .json next to it)")
    v.add_argument("--iou", type=_unit_open, default=0.5, help="IoU threshold for a match")
    v.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("synth", help="generate one synthetic scene from a key=value config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=_cmd_synth)

    b = sub.add_parser("bench", help="run an experiment suite")
    b.add_argument("--suite", required=True, choices=sorted(bench.SUITES))
    b.add_argument("--config", default=None, help="key=value overrides of the bench defaults")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--jobs", type=_pos_int, default=None, help="worker processes (output does not depend on it)")
    b.set_defaults(fn=_cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"sdt {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as e:
        msg = str(e)
        if isinstance(e, OSError) and getattr(e, "filename", None) and str(e.filename) not in msg:
            msg = f"{msg}: {e.filename}"
        print(f"sdt {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
