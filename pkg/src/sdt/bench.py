"""Experiment driver: round-trip fidelity, representation robustness and
parameter ablations over synthetic suites.

Every run is a pure function of its config. Scenes fan out over a process
pool; results come back in scene order, so ``jobs`` never changes the output.
"""

from __future__ import annotations

import atexit
import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .decode import DecodeParams, decode_boundary, decode_sdt, decode_ss, extract_seeds
from .metrics import EvalReport, aggregate, best_ious, evaluate
from .raster import BinaryMask, EnergyMap, LabelMap
from .representations import (
    QuantParams,
    SdtParams,
    boundary_energy,
    dequantize,
    encode_boundary,
    encode_dt,
    encode_sdt,
    encode_ss,
    quantize,
)
from .synth import PerturbSpec, SceneSpec, generate, perturb_boundary, perturb_energy, standard_suite

REPRESENTATIONS = ("boundary", "dt", "sdt", "ss")
ABLATION_PARAMETERS = ("alpha", "theta", "bins")
SCHEMA = {"roundtrip": "roundtrip-v1", "robustness": "robustness-v1", "ablation": "ablation-v1"}


_POOLS: dict[int, ProcessPoolExecutor] = {}


def _pool(jobs: int) -> ProcessPoolExecutor:
    # one long-lived pool per size: worker start-up (imports, JIT cache load) is
    # far more expensive than a single scene
    if jobs not in _POOLS:
        _POOLS[jobs] = ProcessPoolExecutor(max_workers=jobs)
    return _POOLS[jobs]


@atexit.register
def _shutdown_pools() -> None:
    for pool in _POOLS.values():
        pool.shutdown()
    _POOLS.clear()


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, serial for ``jobs <= 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    return list(_pool(jobs).map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# -- round trip --------------------------------------------------------------------


@dataclass(frozen=True)
class SceneResult:
    index: int
    family: str
    seed: int
    n_gt: int
    n_pred: int
    ious: tuple[float, ...]
    seed_pixels: int
    report: EvalReport

    @property
    def mean_iou(self) -> float:
        return float(np.mean(self.ious)) if self.ious else 1.0


@dataclass(frozen=True)
class SuiteResult:
    scenes: tuple[SceneResult, ...]
    report: EvalReport

    @property
    def mean_iou(self) -> float:
        ious = [i for s in self.scenes for i in s.ious]
        return float(np.mean(ious)) if ious else 1.0

    @property
    def count_accuracy(self) -> float:
        if not self.scenes:
            return 1.0
        return sum(s.n_gt == s.n_pred for s in self.scenes) / len(self.scenes)


def _roundtrip_scene(job) -> SceneResult:
    index, spec, sdt, dec, bins, noise = job
    gt = generate(spec)
    energy = encode_sdt(gt, sdt)
    if noise > 0:
        energy = perturb_energy(energy, PerturbSpec("energy-noise", amplitude=noise, seed=spec.seed))
    if bins:
        q = QuantParams(bins)
        energy = dequantize(quantize(energy, q), q)
    seeds = extract_seeds(energy, dec.theta)
    pred = decode_sdt(energy, dec)
    return SceneResult(
        index=index,
        family=spec.family,
        seed=spec.seed,
        n_gt=len(gt),
        n_pred=len(pred),
        ious=tuple(best_ious(pred, gt).values()),
        seed_pixels=int((seeds.labels > 0).sum()),
        report=evaluate(pred, gt),
    )


def roundtrip_suite(
    scenes: Sequence[SceneSpec],
    sdt: SdtParams = SdtParams(),
    dec: DecodeParams = DecodeParams(),
    bins: int | None = None,
    noise: float = 0.0,
    jobs: int = 1,
) -> SuiteResult:
    """generate -> encode_sdt -> [noise] -> [quantize/dequantize] -> decode_sdt -> metrics."""
    jobs_ = [(i, s, sdt, dec, bins, noise) for i, s in enumerate(scenes)]
    res = _map(_roundtrip_scene, jobs_, jobs)
    return SuiteResult(tuple(res), aggregate([r.report for r in res]))


# -- robustness --------------------------------------------------------------------


def _perturbation_applies(rep: str, kind: str) -> bool:
    if kind == "boundary-dropout":
        return rep == "boundary"
    return rep in ("boundary", "dt", "sdt")


def decode_representation(rep: str, gt: LabelMap, dec: DecodeParams, sdt: SdtParams, perturb: PerturbSpec | None) -> LabelMap:
    """Encode ``gt`` as ``rep``, apply ``perturb`` where it is meaningful, decode."""
    fg = gt.foreground()
    kind = perturb.kind if perturb is not None else None
    if rep == "boundary":
        if kind == "boundary-dropout":
            bnd = perturb_boundary(encode_boundary(gt), perturb)
        elif kind is not None:
            e = perturb_energy(boundary_energy(gt), perturb)
            bnd = BinaryMask((e.values >= 0) & (e.values < 0.5))
        else:
            bnd = encode_boundary(gt)
        return decode_boundary(bnd, fg, dec)
    if rep in ("dt", "sdt"):
        energy: EnergyMap = encode_sdt(gt, sdt) if rep == "sdt" else encode_dt(gt, normalize=True)  # type: ignore[assignment]
        if kind in ("energy-noise", "energy-blur"):
            energy = perturb_energy(energy, perturb)
        return decode_sdt(energy, dec)
    if rep == "ss":
        return decode_ss(encode_ss(gt, sdt), dec)
    raise ValueError(f"unknown representation {rep!r}")


@dataclass(frozen=True)
class RobustnessRow:
    suite: str
    representation: str
    kind: str
    level: float
    applied: bool
    n_scenes: int
    n_gt: int
    splits: int
    merges: int
    split_rate: float
    merge_rate: float
    mean_splits: float
    mean_merges: float
    f1: float


def _robust_scene(job):
    spec, rep, dec, sdt, perturb = job
    gt = generate(spec)
    pred = decode_representation(rep, gt, dec, sdt, perturb)
    r = evaluate(pred, gt)
    return len(gt), r


def robustness_suite(
    scenes: Sequence[SceneSpec],
    perturbations: Sequence[PerturbSpec],
    representations: Iterable[str] = REPRESENTATIONS,
    dec: DecodeParams = DecodeParams(),
    sdt: SdtParams = SdtParams(),
    suite: str = "suite",
    jobs: int = 1,
) -> list[RobustnessRow]:
    """Per representation x perturbation: split/merge rates (per gt instance) and pooled F1.

    Scene ``i`` is perturbed with seed ``perturbation.seed + i``. A perturbation
    that has no meaning for a representation (dropout on an energy map,
    anything on skeleton scales) leaves it exact and is marked ``applied=False``.
    """
    reps = list(representations)
    if not reps:
        raise ValueError("robustness_suite needs at least one representation")
    for r in reps:
        if r not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {r!r}")
    rows = []
    exact: dict[str, list] = {}
    for pert in perturbations:
        for rep in reps:
            applies = _perturbation_applies(rep, pert.kind) and pert.level > 0
            if applies:
                jobs_ = [(s, rep, dec, sdt, replace(pert, seed=pert.seed + i)) for i, s in enumerate(scenes)]
                out = _map(_robust_scene, jobs_, jobs)
            else:
                if rep not in exact:
                    exact[rep] = _map(_robust_scene, [(s, rep, dec, sdt, None) for s in scenes], jobs)
                out = exact[rep]
            n_gt = sum(n for n, _ in out)
            reports = [r for _, r in out]
            agg = aggregate(reports)
            n = max(len(scenes), 1)
            rows.append(RobustnessRow(
                suite=suite,
                representation=rep,
                kind=pert.kind,
                level=pert.level,
                applied=applies,
                n_scenes=len(scenes),
                n_gt=n_gt,
                splits=agg.splits,
                merges=agg.merges,
                split_rate=agg.splits / n_gt if n_gt else 0.0,
                merge_rate=agg.merges / n_gt if n_gt else 0.0,
                mean_splits=agg.splits / n,
                mean_merges=agg.merges / n,
                f1=agg.f1,
            ))
    return rows


# -- ablation ----------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    parameter: str
    value: float
    mean_iou: float
    count_accuracy: float
    f1: float
    obj_dice: float
    obj_hausdorff: float
    splits: int
    merges: int
    seed_pixels: int


def ablation_sweep(
    parameter: str,
    values: Sequence[float],
    scenes: Sequence[SceneSpec],
    sdt: SdtParams = SdtParams(),
    dec: DecodeParams = DecodeParams(),
    bins: int | None = None,
    noise: float = 0.1,
    jobs: int = 1,
) -> tuple[list[AblationRow], list[tuple[float, SuiteResult]]]:
    """One round-trip suite per value, under energy noise of amplitude ``noise``."""
    if parameter not in ABLATION_PARAMETERS:
        raise ValueError(f"parameter must be one of {ABLATION_PARAMETERS}, got {parameter!r}")
    if not len(values):
        raise ValueError("ablation needs at least one value")
    rows, runs = [], []
    for v in values:
        s, d, b = sdt, dec, bins
        if parameter == "alpha":
            s = replace(sdt, alpha=float(v))
        elif parameter == "theta":
            d = replace(dec, theta=float(v))
        else:
            b = int(v)
        res = roundtrip_suite(scenes, s, d, b, noise, jobs)
        runs.append((v, res))
        rows.append(AblationRow(
            parameter=parameter,
            value=float(v),
            mean_iou=res.mean_iou,
            count_accuracy=res.count_accuracy,
            f1=res.report.f1,
            obj_dice=res.report.obj_dice,
            obj_hausdorff=res.report.obj_hausdorff,
            splits=res.report.splits,
            merges=res.report.merges,
            seed_pixels=sum(sc.seed_pixels for sc in res.scenes),
        ))
    return rows, runs


# -- config ------------------------------------------------------------------------


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class BenchConfig:
    # scenes
    n_scenes: int = 100
    seed: int = 0
    width: int = 96
    height: int = 96
    # encoding / decoding
    alpha: float = 0.8
    epsilon: float = 1e-6
    sigma: float = 2.0
    level: float = 0.5
    theta: float = 0.7
    min_size: int = 16
    fill_holes: bool = True
    bins: int = 10
    # robustness
    representations: tuple[str, ...] = REPRESENTATIONS
    dropout_rates: tuple[float, ...] = (0.0, 0.01, 0.05)
    noise_amplitudes: tuple[float, ...] = (0.0, 0.1, 0.2)
    touching_count: int = 16
    neck_widths: tuple[int, ...] = (2, 3)
    # ablation
    parameter: str = "alpha"
    values: tuple[float, ...] = (0.6, 0.8, 1.0)
    noise: float = 0.1
    jobs: int = 1

    def sdt_params(self) -> SdtParams:
        return SdtParams(self.alpha, self.epsilon, self.sigma, self.level)

    def decode_params(self) -> DecodeParams:
        return DecodeParams(self.theta, self.min_size, self.fill_holes)

    def resolved(self) -> dict:
        """Everything that determines the results (``jobs`` does not)."""
        d = asdict(self)
        del d["jobs"]
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_FIELD_PARSERS: dict[str, Callable[[str], object]] = {
    "representations": _words,
    "dropout_rates": _floats,
    "noise_amplitudes": _floats,
    "neck_widths": _ints,
    "values": _floats,
    "fill_holes": _bool,
    "parameter": str,
}


def bench_config_from(raw: dict[str, str]) -> BenchConfig:
    known = {f.name: f for f in fields(BenchConfig) if not f.name.startswith("_")}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown bench config keys: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in raw.items():
        parse = _FIELD_PARSERS.get(k) or type(getattr(BenchConfig(), k))
        kw[k] = parse(v)
    cfg = BenchConfig(**kw)
    cfg.sdt_params()
    cfg.decode_params()
    return cfg


# -- artifacts ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_csv(path: Path, schema: str, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not rows:
            w.writerow(["schema"])
            return
        cols = list(rows[0])
        w.writerow(["schema", *cols])
        for r in rows:
            w.writerow([schema, *(_fmt(r[c]) for c in cols)])


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _plot_svg(csv_path: Path, svg_path: Path, x: str, ys: Sequence[str], group: Sequence[str], title: str) -> None:
    """Line plot of ``ys`` against ``x``, one line per ``group`` key, read from the CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "sdt-bench"
    rows = read_csv(csv_path)
    fig, axes = plt.subplots(1, len(ys), figsize=(4.2 * len(ys), 3.4), squeeze=False)
    keys = sorted({tuple(r[g] for g in group) for r in rows})
    for ax, y in zip(axes[0], ys):
        for key in keys:
            sel = [r for r in rows if tuple(r[g] for g in group) == key]
            xs = [float(r[x]) for r in sel]
            order = np.argsort(xs, kind="stable")
            ax.plot([xs[i] for i in order], [float(sel[i][y]) for i in order], marker="o", label="/".join(key))
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, suite: str, cfg: BenchConfig, seeds: list[int], artifacts: list[Path], extra: dict | None = None) -> Path:
    manifest = {
        "suite": suite,
        "schema": SCHEMA[suite],
        "config": cfg.resolved(),
        "seeds": seeds,
        "artifacts": {p.name: sha256(p) for p in sorted(artifacts)},
    }
    if extra:
        manifest["summary"] = extra
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _scene_rows(res: SuiteResult, variant: str) -> list[dict]:
    return [
        {
            "variant": variant,
            "scene": s.index,
            "family": s.family,
            "seed": s.seed,
            "n_gt": s.n_gt,
            "n_pred": s.n_pred,
            "mean_iou": s.mean_iou,
            "seed_pixels": s.seed_pixels,
            "f1": s.report.f1,
            "obj_dice": s.report.obj_dice,
            "obj_hausdorff": s.report.obj_hausdorff,
            "splits": s.report.splits,
            "merges": s.report.merges,
        }
        for s in res.scenes
    ]


def _summary(res: SuiteResult, variant: str) -> dict:
    return {
        "variant": variant,
        "n_scenes": len(res.scenes),
        "mean_iou": res.mean_iou,
        "count_accuracy": res.count_accuracy,
        "f1": res.report.f1,
        "obj_dice": res.report.obj_dice,
        "obj_hausdorff": res.report.obj_hausdorff,
        "splits": res.report.splits,
        "merges": res.report.merges,
    }


def run_roundtrip(cfg: BenchConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    scenes = standard_suite(cfg.n_scenes, cfg.seed, cfg.width, cfg.height)
    exact = roundtrip_suite(scenes, cfg.sdt_params(), cfg.decode_params(), None, 0.0, cfg.jobs)
    variants = [("exact", exact)]
    if cfg.bins:
        variants.append((f"quantized_k{cfg.bins}", roundtrip_suite(scenes, cfg.sdt_params(), cfg.decode_params(), cfg.bins, 0.0, cfg.jobs)))
    summary = [_summary(r, v) for v, r in variants]
    per_scene = [row for v, r in variants for row in _scene_rows(r, v)]
    a = out / "roundtrip.csv"
    b = out / "roundtrip_scenes.csv"
    write_csv(a, SCHEMA["roundtrip"], summary)
    write_csv(b, SCHEMA["roundtrip"], per_scene)
    write_manifest(out, "roundtrip", cfg, [s.seed for s in scenes], [a, b])
    return {"summary": summary}


def robustness_scenes(cfg: BenchConfig) -> dict[str, list[SceneSpec]]:
    n = cfg.n_scenes
    pairs = [SceneSpec(cfg.width, cfg.height, "touching-squares", 2, 0, cfg.seed + i) for i in range(n)]
    touching = [SceneSpec(cfg.width, cfg.height, "touching-squares", cfg.touching_count, 0, cfg.seed + i) for i in range(n)]
    dumbbells = [
        SceneSpec(cfg.width, cfg.height, "dumbbell", 2, 2, cfg.seed + i, neck_width=cfg.neck_widths[i % len(cfg.neck_widths)])
        for i in range(n)
    ] if cfg.neck_widths else []
    return {"touching_pairs": pairs, "touching": touching, "dumbbell": dumbbells}


def run_robustness(cfg: BenchConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    dec, sdt = cfg.decode_params(), cfg.sdt_params()
    perts = [PerturbSpec("boundary-dropout", rate=r, seed=cfg.seed) for r in cfg.dropout_rates]
    perts += [PerturbSpec("energy-noise", amplitude=a, seed=cfg.seed) for a in cfg.noise_amplitudes]
    rows: list[dict] = []
    seeds: list[int] = []
    for name, scenes in robustness_scenes(cfg).items():
        if not scenes:
            continue
        seeds += [s.seed for s in scenes]
        for r in robustness_suite(scenes, perts, cfg.representations, dec, sdt, name, cfg.jobs):
            rows.append(asdict(r))
    # the dumbbell suite split out by neck width, at zero perturbation
    for w in cfg.neck_widths:
        scenes = [s for s in robustness_scenes(cfg)["dumbbell"] if s.neck_width == w]
        for r in robustness_suite(scenes, [PerturbSpec("energy-noise")], cfg.representations, dec, sdt, f"dumbbell_neck{w}", cfg.jobs):
            rows.append(asdict(r))
    a = out / "robustness.csv"
    write_csv(a, SCHEMA["robustness"], rows)
    arts = [a]
    for kind, svg in (("boundary-dropout", "robustness_dropout.svg"), ("energy-noise", "robustness_noise.svg")):
        sub = [r for r in rows if r["kind"] == kind and r["suite"] in ("touching_pairs", "touching", "dumbbell")]
        if not sub:
            continue
        tmp = out / f".{svg}.csv"
        write_csv(tmp, SCHEMA["robustness"], sub)
        _plot_svg(tmp, out / svg, "level", ["split_rate", "merge_rate", "f1"], ["suite", "representation"], kind)
        tmp.unlink()
        arts.append(out / svg)
    write_manifest(out, "robustness", cfg, sorted(set(seeds)), arts)
    return {"rows": rows}


def run_ablation(cfg: BenchConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    scenes = standard_suite(cfg.n_scenes, cfg.seed, cfg.width, cfg.height)
    bins = None if cfg.parameter == "bins" else (cfg.bins or None)
    rows, runs = ablation_sweep(cfg.parameter, cfg.values, scenes, cfg.sdt_params(), cfg.decode_params(), bins, cfg.noise, cfg.jobs)
    a = out / "ablation.csv"
    b = out / "ablation_scenes.csv"
    write_csv(a, SCHEMA["ablation"], [asdict(r) for r in rows])
    per_scene = []
    for v, res in runs:
        for row in _scene_rows(res, f"{cfg.parameter}={v!r}"):
            per_scene.append({"parameter": cfg.parameter, "value": float(v), **row})
    write_csv(b, SCHEMA["ablation"], per_scene)
    svg = out / "ablation.svg"
    _plot_svg(a, svg, "value", ["mean_iou", "f1", "obj_hausdorff"], ["parameter"], f"ablation over {cfg.parameter}")
    write_manifest(out, "ablation", cfg, [s.seed for s in scenes], [a, b, svg])
    return {"rows": [asdict(r) for r in rows]}


SUITES = {"roundtrip": run_roundtrip, "robustness": run_robustness, "ablation": run_ablation}


def run_bench(suite: str, cfg: BenchConfig, out) -> dict:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    return SUITES[suite](cfg, Path(out))
