"""Experiment driver: declarative sweep configs to CSV tables and SVG plots.

A config is a flat key = value text file describing one experiment: model
parameters, step count, dataset sizes, a D grid, and one sweep variable
with a comma-separated value list.  Every sweep point generates its own
train/test data, builds the exact process tensor, trains at each D, and
evaluates; a failing point contributes an error row without disturbing the
others.  All randomness derives from the config seed, so reruns are
byte-identical.  Plots are self-contained SVG, one file per metric.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from proctensor import learn, serialize
from proctensor.datagen import generate_dataset
from proctensor.evaluation import evaluate_model
from proctensor.exceptions import ValidationError
from proctensor.model import ModelParams
from proctensor.process import build_exact_process_mpo
from proctensor.serialize import _atomic_write

CSV_HEADER = (
    "experiment_id,sweep_var,sweep_value,D,n,metric,value,ci_low,ci_high,seed"
)
SWEEP_VARS = ("D", "gamma", "r", "J", "dt", "M_train")
STAGES = ("gen-data", "build-exact", "train", "evaluate", "run", "plot")
ENV_PREFIX = "PROCTENSOR_"
EXACT_CUTOFF = 1e-12
DISTANCE_STEP_CAP = 6  # dense 16^N process expansion beyond this is skipped

_DEFAULTS = {
    "experiment_id": "experiment",
    "L": "3",
    "J": "4",
    "h": "0.5",
    "Delta": "1.5",
    "gamma": "1",
    "r": "0",
    "dt": "0.1",
    "N": "6",
    "M_train": "1000",
    "M_test": "500",
    "D": "1,2,3,4,5,6,7,8",
    "sweep_var": "D",
    "sweep_values": "",
    "seed": "0",
    "sweeps": "10",
    "mu": "",
    "out": "results",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    L: int
    J: float
    h: float
    Delta: float
    gamma: float
    r: float
    dt: float
    n_steps: int
    m_train: int
    m_test: int
    d_list: tuple[int, ...]
    sweep_var: str
    sweep_values: tuple[float, ...]
    seed: int
    sweeps: int
    mu: float | None
    out_dir: str


def _parse_kv_file(path: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            key = key.strip()
            if key not in _DEFAULTS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = val.strip()
    return raw


def _apply_env(raw: dict[str, str]) -> dict[str, str]:
    for key in _DEFAULTS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            raw[key] = env
    return raw


def _parse_list(text: str, cast) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    return tuple(cast(s) for s in items)


def load_config(path: str, out_override: str | None = None,
                seed_override: int | None = None) -> ExperimentConfig:
    """Parse a config file, then apply env and command-line overrides."""
    raw = dict(_DEFAULTS)
    raw.update(_parse_kv_file(path))
    raw = _apply_env(raw)
    sweep_var = raw["sweep_var"]
    if sweep_var not in SWEEP_VARS:
        raise ValidationError(
            f"sweep_var must be one of {SWEEP_VARS}, got {sweep_var!r}"
        )
    if sweep_var == "D":
        sweep_values = _parse_list(raw["sweep_values"] or raw["D"], int)
        d_list = tuple(int(v) for v in sweep_values)
    else:
        sweep_values = _parse_list(raw["sweep_values"], float)
        d_list = _parse_list(raw["D"], int)
        if not d_list:
            raise ValidationError("config: empty D list")
    cfg = ExperimentConfig(
        experiment_id=raw["experiment_id"],
        L=int(raw["L"]),
        J=float(raw["J"]),
        h=float(raw["h"]),
        Delta=float(raw["Delta"]),
        gamma=float(raw["gamma"]),
        r=float(raw["r"]),
        dt=float(raw["dt"]),
        n_steps=int(raw["N"]),
        m_train=int(raw["M_train"]),
        m_test=int(raw["M_test"]),
        d_list=d_list,
        sweep_var=sweep_var,
        sweep_values=tuple(sweep_values),
        seed=int(raw["seed"]),
        sweeps=int(raw["sweeps"]),
        mu=float(raw["mu"]) if raw["mu"] else None,
        out_dir=raw["out"],
    )
    if out_override is not None:
        cfg = replace(cfg, out_dir=out_override)
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    base_params(cfg)  # validates parameter ranges
    return cfg


def base_params(cfg: ExperimentConfig) -> ModelParams:
    return ModelParams(
        L=cfg.L, J=cfg.J, h=cfg.h, Delta=cfg.Delta,
        gamma=cfg.gamma, r=cfg.r, dt=cfg.dt,
    )


def sweep_points(cfg: ExperimentConfig) -> list[float | None]:
    """Outer sweep values; a D sweep is a single point over the D grid."""
    if cfg.sweep_var == "D":
        return [None]
    return list(cfg.sweep_values)


def point_setup(
    cfg: ExperimentConfig, value: float | None
) -> tuple[ModelParams, int, tuple[int, ...]]:
    """Model params, training-set size, and D grid for one sweep point."""
    p = base_params(cfg)
    m_train = cfg.m_train
    d_list = cfg.d_list
    if cfg.sweep_var == "M_train":
        m_train = int(value)
    elif cfg.sweep_var != "D":
        p = replace(p, **{cfg.sweep_var: float(value)})
    return p, m_train, d_list


def _point_seed(cfg: ExperimentConfig, idx: int) -> int:
    return cfg.seed + 100000 * (idx + 1)


def _paths(cfg: ExperimentConfig, idx: int) -> dict[str, str]:
    stem = os.path.join(cfg.out_dir, f"{cfg.experiment_id}_pt{idx}")
    return {
        "train": stem + "_train.dataset",
        "test": stem + "_test.dataset",
        "exact": stem + "_exact.process",
        "model": stem + "_D{d}.process",
        "report": stem + "_D{d}_report.txt",
    }


def _sweep_value_str(cfg: ExperimentConfig, value: float | None, d: int) -> str:
    if cfg.sweep_var == "D":
        return str(d)
    if cfg.sweep_var == "M_train":
        return str(int(value))
    return repr(float(value))


def _stage_gen_data(cfg: ExperimentConfig, idx: int, value: float | None) -> None:
    p, m_train, _ = point_setup(cfg, value)
    seed = _point_seed(cfg, idx)
    paths = _paths(cfg, idx)
    serialize.save_dataset(
        paths["train"], generate_dataset(p, cfg.n_steps, m_train, seed + 1)
    )
    serialize.save_dataset(
        paths["test"], generate_dataset(p, cfg.n_steps, cfg.m_test, seed + 2)
    )


def _stage_build_exact(cfg: ExperimentConfig, idx: int, value: float | None) -> None:
    p, _, _ = point_setup(cfg, value)
    u = build_exact_process_mpo(p, cfg.n_steps, max_bond=None, cutoff=EXACT_CUTOFF)
    serialize.save_process(_paths(cfg, idx)["exact"], u)


def _stage_train(cfg: ExperimentConfig, idx: int, value: float | None) -> None:
    _, _, d_list = point_setup(cfg, value)
    seed = _point_seed(cfg, idx)
    paths = _paths(cfg, idx)
    data = serialize.load_dataset(paths["train"])
    for d in d_list:
        tc = learn.TrainConfig(
            bond_dim=d, sweeps=cfg.sweeps, mu=cfg.mu, seed=seed + 10 + d
        )
        model, report = learn.train(data, tc)
        serialize.save_process(paths["model"].format(d=d), model)
        serialize.write_train_report(paths["report"].format(d=d), report)


def _stage_evaluate(
    cfg: ExperimentConfig, idx: int, value: float | None
) -> list[str]:
    _, _, d_list = point_setup(cfg, value)
    seed = _point_seed(cfg, idx)
    paths = _paths(cfg, idx)
    test = serialize.load_dataset(paths["test"])
    exact = (
        serialize.load_process(paths["exact"])
        if cfg.n_steps <= DISTANCE_STEP_CAP
        else None
    )
    rows = []
    for d in d_list:
        model = serialize.load_process(paths["model"].format(d=d))
        rep = evaluate_model(
            model, test, exact=exact, seed=seed + 3, bond_dim=d
        )
        sv = _sweep_value_str(cfg, value, d)
        pre = f"{cfg.experiment_id},{cfg.sweep_var},{sv},{d}"
        post = str(cfg.seed)
        rows.append(
            f"{pre},all,I,{rep.median_infidelity!r},"
            f"{rep.overall_ci[0]!r},{rep.overall_ci[1]!r},{post}"
        )
        for n in range(1, rep.n_steps + 1):
            lo, hi = rep.step_ci[n - 1]
            rows.append(
                f"{pre},{n},I_n,{rep.step_medians[n - 1]!r},{lo!r},{hi!r},{post}"
            )
        rows.append(f"{pre},all,delta_output,{rep.delta_output!r},,,{post}")
        if rep.delta_process is not None:
            rows.append(
                f"{pre},all,delta_process,{rep.delta_process!r},,,{post}"
            )
    return rows


def run_point(
    cfg: ExperimentConfig, idx: int, value: float | None, stage: str
) -> tuple[bool, list[str], str]:
    """Execute one sweep point; never raises.

    Returns (ok, csv rows, diagnostic message).  A failure at any stage
    yields a single error row so other points stay unaffected.
    """
    try:
        rows: list[str] = []
        if stage in ("gen-data", "run"):
            _stage_gen_data(cfg, idx, value)
        if stage in ("build-exact", "run"):
            _stage_build_exact(cfg, idx, value)
        if stage in ("train", "run"):
            _stage_train(cfg, idx, value)
        if stage in ("evaluate", "run"):
            rows = _stage_evaluate(cfg, idx, value)
        return True, rows, ""
    except Exception as exc:  # crash isolation is the contract here
        sv = "" if value is None else _sweep_value_str(cfg, value, 0)
        row = (
            f"{cfg.experiment_id},{cfg.sweep_var},{sv},,all,error,"
            f"{type(exc).__name__},,,{cfg.seed}"
        )
        return False, [row], traceback.format_exc()


def run_experiment(cfg: ExperimentConfig, stage: str, workers: int = 1) -> int:
    """Drive all sweep points for one stage; returns a process exit code."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    points = sweep_points(cfg)
    jobs = [(cfg, i, v, stage) for i, v in enumerate(points)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point_job, jobs))
    else:
        results = [_run_point_job(j) for j in jobs]
    all_ok = True
    rows: list[str] = []
    for (_, idx, value, _), (ok, point_rows, msg) in zip(jobs, results):
        rows.extend(point_rows)
        if not ok:
            all_ok = False
            print(
                f"point {idx} ({cfg.sweep_var}={value}) failed:\n{msg}",
                file=sys.stderr,
            )
    if stage in ("evaluate", "run"):
        csv_path = _csv_path(cfg)
        _atomic_write(
            csv_path,
            ("\n".join([CSV_HEADER] + rows) + "\n").encode("utf-8"),
        )
        print(f"wrote {csv_path}")
    if stage in ("plot", "run"):
        for path in emit_svg(_csv_path(cfg), cfg):
            print(f"wrote {path}")
    return 0 if all_ok else 1


def _run_point_job(job) -> tuple[bool, list[str], str]:
    return run_point(*job)


def _csv_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.experiment_id}_results.csv")


def _read_csv_rows(path: str) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


# ---------------------------------------------------------------------------
# SVG emission.  Hand-rolled to stay dependency-free: one panel per metric,
# D on a linear x-axis, values on a log y-axis, one polyline per sweep value
# with an optional shaded confidence band.

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)
_PLOT_W, _PLOT_H = 640.0, 440.0
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64.0, 24.0, 36.0, 48.0
_LOG_FLOOR = 1e-16

_METRIC_LABELS = {
    "I": "median infidelity",
    "delta_process": "process distance",
    "delta_output": "output distance",
}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def emit_svg(csv_path: str, cfg: ExperimentConfig) -> list[str]:
    """One SVG per metric present in the CSV; returns the paths written."""
    rows = [
        r for r in _read_csv_rows(csv_path)
        if r["metric"] in _METRIC_LABELS and r["n"] == "all"
    ]
    written = []
    for metric, ylabel in _METRIC_LABELS.items():
        sub = [r for r in rows if r["metric"] == metric]
        if not sub:
            continue
        path = os.path.join(
            cfg.out_dir, f"{cfg.experiment_id}_{metric}.svg"
        )
        _atomic_write(path, _render_panel(sub, cfg, ylabel).encode("utf-8"))
        written.append(path)
    return written


def _render_panel(rows: list[dict[str, str]], cfg: ExperimentConfig,
                  ylabel: str) -> str:
    # series keyed by sweep value, points sorted by D
    series: dict[str, list[tuple[int, float, float, float]]] = {}
    for r in rows:
        v = max(float(r["value"]), _LOG_FLOOR)
        lo = max(float(r["ci_low"]), _LOG_FLOOR) if r["ci_low"] else v
        hi = max(float(r["ci_high"]), _LOG_FLOOR) if r["ci_high"] else v
        series.setdefault(r["sweep_value"], []).append(
            (int(r["D"]), v, lo, hi)
        )
    for pts in series.values():
        pts.sort()
    xs = sorted({d for pts in series.values() for d, _, _, _ in pts})
    all_vals = [w for pts in series.values() for _, v, lo, hi in pts
                for w in (v, lo, hi)]
    import math

    y_lo = math.floor(math.log10(min(all_vals)))
    y_hi = math.ceil(math.log10(max(all_vals)))
    if y_hi == y_lo:
        y_hi += 1
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 += 1
    inner_w = _PLOT_W - _MARGIN_L - _MARGIN_R
    inner_h = _PLOT_H - _MARGIN_T - _MARGIN_B

    def px(d: float) -> float:
        return _MARGIN_L + (d - x0) / (x1 - x0) * inner_w

    def py(v: float) -> float:
        frac = (math.log10(v) - y_lo) / (y_hi - y_lo)
        return _PLOT_H - _MARGIN_B - frac * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{_PLOT_W:.0f}" height="{_PLOT_H:.0f}" '
        f'viewBox="0 0 {_PLOT_W:.0f} {_PLOT_H:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_PLOT_W / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">'
        f"{cfg.experiment_id}: {ylabel} vs D</text>",
    ]
    # axes
    ax_y0, ax_y1 = py(10.0 ** y_lo), py(10.0 ** y_hi)
    parts.append(
        f'<line x1="{_fmt(px(x0))}" y1="{_fmt(ax_y0)}" '
        f'x2="{_fmt(px(x1))}" y2="{_fmt(ax_y0)}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_fmt(px(x0))}" y1="{_fmt(ax_y0)}" '
        f'x2="{_fmt(px(x0))}" y2="{_fmt(ax_y1)}" stroke="black"/>'
    )
    for d in xs:
        parts.append(
            f'<text x="{_fmt(px(d))}" y="{_fmt(ax_y0 + 18)}" '
            f'text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{d}</text>'
        )
    for e in range(y_lo, y_hi + 1):
        yy = py(10.0 ** e)
        parts.append(
            f'<line x1="{_fmt(px(x0) - 4)}" y1="{_fmt(yy)}" '
            f'x2="{_fmt(px(x1))}" y2="{_fmt(yy)}" stroke="#cccccc" '
            f'stroke-dasharray="2,3"/>'
        )
        parts.append(
            f'<text x="{_fmt(px(x0) - 8)}" y="{_fmt(yy + 4)}" '
            f'text-anchor="end" font-family="sans-serif" '
            f'font-size="11">1e{e}</text>'
        )
    parts.append(
        f'<text x="{_fmt(px((x0 + x1) / 2))}" y="{_PLOT_H - 10:.0f}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">'
        "bond dimension D</text>"
    )
    for i, (label, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        band_has_width = any(hi > lo for _, _, lo, hi in pts)
        if band_has_width:
            upper = [f"{_fmt(px(d))},{_fmt(py(hi))}" for d, _, _, hi in pts]
            lower = [
                f"{_fmt(px(d))},{_fmt(py(lo))}" for d, _, lo, _ in reversed(pts)
            ]
            parts.append(
                f'<polygon points="{" ".join(upper + lower)}" '
                f'fill="{color}" fill-opacity="0.15" stroke="none"/>'
            )
        line = " ".join(f"{_fmt(px(d))},{_fmt(py(v))}" for d, v, _, _ in pts)
        parts.append(
            f'<polyline points="{line}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_PLOT_W - _MARGIN_R - 8:.0f}" '
            f'y="{_MARGIN_T + 16 * i + 12:.0f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="{color}">'
            f"{cfg.sweep_var}={label}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="proctensor",
        description="process-tensor learning experiments",
    )
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--out", default=None, help="output directory override")
    ap.add_argument("--seed", type=int, default=None, help="seed override")
    ap.add_argument("--workers", type=int, default=1, help="sweep-point workers")
    ap.add_argument(
        "--stage", default="run", choices=STAGES, help="pipeline stage to run"
    )
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, out_override=args.out,
                          seed_override=args.seed)
    except (ValidationError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.stage == "plot":
        os.makedirs(cfg.out_dir, exist_ok=True)
        try:
            for path in emit_svg(_csv_path(cfg), cfg):
                print(f"wrote {path}")
        except (OSError, ValidationError) as exc:
            print(f"plot error: {exc}", file=sys.stderr)
            return 2
        return 0
    return run_experiment(cfg, args.stage, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
