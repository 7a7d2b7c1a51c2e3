"""Command-line entry point: ``schedlaw <subcommand> ...``.

Exit status: 0 on success, 1 on validation errors (bad flags, files,
schemas), 2 on numeric failures (singularities, insufficient data).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    BoundCoefficients,
    BoundKind,
    bound_trace,
    closed_form_formula,
    log_tau_grid,
    optimal_peak_lr,
)
from .convex_sim import make_problem, sgd_sweep
from .errors import NumericError, ValidationError
from .fitter import LossTrace, build_design, fit_predict, read_trace_csv, trace_to_csv
from .qualifier import DEFAULT_T_GRID, qualify
from .scaling import (
    fit_scaling,
    prediction_table_csv,
    predict_loss,
    read_records_csv,
    transfer_lr,
)
from .schedule import DERIVED_KINDS, ScheduleKind, ScheduleSpec, eval_discrete

# --------------------------------------------------------------------------
# helpers


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_schedule(arg: str) -> ScheduleSpec:
    text = arg if arg.lstrip().startswith("{") else _read_text(arg)
    return ScheduleSpec.from_json(text)


def _parse_grid(text: str, T: int) -> np.ndarray:
    text = text.strip()
    if text == "all":
        return np.arange(1, T + 1)
    if text.startswith("log:"):
        try:
            n = int(text[4:])
        except ValueError:
            raise ValidationError(f"--grid: bad point count in {text!r}") from None
        return log_tau_grid(T, n)
    try:
        return np.array(sorted({int(float(v)) for v in text.split(",") if v.strip()}))
    except ValueError:
        raise ValidationError(f"--grid: expected 'all', 'log:N' or a comma list, got {text!r}") from None


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"{flag}: expected a comma-separated list of integers, got {text!r}") from None


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"{flag}: expected a comma-separated list of numbers, got {text!r}") from None


def _parse_seeds(text: str) -> list[int]:
    if ":" in text:
        lo, _, hi = text.partition(":")
        return list(range(int(lo), int(hi)))
    if "," not in text:
        n = int(text)
        return list(range(n))
    return _parse_ints(text, "--seeds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def svg_polyline(x, y, *, logx: bool = False, width: int = 640, height: int = 400, title: str = "") -> str:
    """Minimal SVG line plot with axes and min/max tick labels."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & ((x > 0) if logx else True)
    x, y = x[ok], y[ok]
    xs = np.log10(x) if logx else x
    pad = 50
    x0, x1 = (xs.min(), xs.max()) if xs.size else (0.0, 1.0)
    y0, y1 = (y.min(), y.max()) if y.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    px = pad + (xs - x0) / (x1 - x0) * (width - 2 * pad)
    py = height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    xl = (10**x0, 10**x1) if logx else (x0, x1)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<text x="{pad}" y="{height - pad + 18}" font-size="11">{xl[0]:.4g}</text>\n'
        f'<text x="{width - pad}" y="{height - pad + 18}" font-size="11" text-anchor="end">{xl[1]:.4g}</text>\n'
        f'<text x="{pad - 4}" y="{height - pad}" font-size="11" text-anchor="end">{y0:.4g}</text>\n'
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="11" text-anchor="end">{y1:.4g}</text>\n'
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>\n'
        "</svg>\n"
    )


def _emit(args, report: dict, csv_text: str | None = None, svg_text: str | None = None) -> None:
    report = {"tool": "schedlaw", "version": __version__, "config": _config(args), **report}
    body = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    extra = {"csv": csv_text, "svg": svg_text}.get(args.format)
    if args.format != "json" and extra is None:
        raise ValidationError(f"--format {args.format}: not available for this subcommand")
    if args.out is None:
        sys.stdout.write(body if args.format == "json" else extra)
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path = out if out.suffix == ".json" else out.with_suffix(".json")
    json_path.write_text(body)
    if args.format != "json":
        out.with_suffix("." + args.format).write_text(extra)


# --------------------------------------------------------------------------
# subcommands


def cmd_bound(args) -> dict:
    spec = _load_schedule(args.schedule)
    if args.eta_peak is not None:
        spec = spec.with_horizon(spec.T, args.eta_peak)
    elif args.sqrt_scaled:
        spec = spec.with_horizon(spec.T, 1.0 / math.sqrt(spec.T))
    coeffs = BoundCoefficients(args.L_star, args.D, args.G)
    lrs = eval_discrete(spec)
    grid = _parse_grid(args.grid, spec.T)
    trace = bound_trace(coeffs, lrs, grid, BoundKind(args.bound))
    report = {
        "schedule": spec.to_dict(),
        "bound": args.bound,
        "tau": trace.tau_grid,
        "values": trace.values,
    }
    if spec.kind in DERIVED_KINDS and spec.warmup_steps == 0 and coeffs.D > 0 and coeffs.G > 0 and spec.T >= 2:
        eta_star, bound_star = optimal_peak_lr(spec.kind, coeffs, spec.T, c=spec.c)
        report["closed_form"] = {
            "kind": spec.kind.value,
            "eta_star": eta_star,
            "bound_star": bound_star,
            "formula": closed_form_formula(spec.kind),
        }
    svg = svg_polyline(trace.tau_grid, trace.values, logx=True, title=f"{args.bound} bound, {spec.kind.value}")
    _emit(args, report, trace.to_csv(), svg)
    return report


def _family(args) -> ScheduleSpec:
    if args.schedule:
        return _load_schedule(args.schedule)
    if not args.kind:
        raise ValidationError("qualify: pass --kind or --schedule")
    kind = ScheduleKind.parse(args.kind)
    c = args.c if kind is ScheduleKind.WSD else None
    if kind is ScheduleKind.WSD and c is None:
        c = 0.8
    cycles = args.cycles if kind is ScheduleKind.CYCLIC else None
    return ScheduleSpec(kind, 1.0, 100, c=c, warmup_frac=args.warmup_frac, cycles=cycles)


def cmd_qualify(args) -> dict:
    family = _family(args)
    grid = _parse_ints(args.t_grid, "--t-grid") if args.t_grid else list(DEFAULT_T_GRID)
    rep = qualify(family, grid, delta=args.delta, D=args.D, G=args.G)
    report = rep.to_dict()
    if rep.notes:
        report["notes"] = rep.notes
    csv_text = "T,value,value_sqrtT\n" + "".join(
        f"{T},{v!r},{v * math.sqrt(T)!r}\n" for T, v in zip(rep.T_grid, rep.values)
    )
    svg = svg_polyline(rep.T_grid[: len(rep.values)], np.asarray(rep.values) * np.sqrt(rep.T_grid[: len(rep.values)]),
                       logx=True, title=f"exam value * sqrt(T), {family.kind.value}")
    _emit(args, report, csv_text, svg)
    return report


def cmd_fit(args) -> dict:
    trace = read_trace_csv(_read_text(args.trace), smoothing_window=args.smooth)
    schedule = _load_schedule(args.schedule) if args.schedule else None
    rep = fit_predict(trace, split_frac=args.split, schedule=schedule)
    report = rep.to_dict()
    if rep.notes:
        report["notes"] = rep.notes
    lrs = eval_discrete(schedule) if schedule is not None else trace.lrs
    taus = trace.steps if schedule is not None else np.arange(1, len(trace) + 1)
    keep = taus >= 1
    pred = rep.predict(build_design(lrs, taus[keep]))
    csv_text = "step,loss,predicted\n" + "".join(
        f"{int(s)},{float(v)!r},{float(p)!r}\n" for s, v, p in zip(trace.steps[keep], trace.losses[keep], pred)
    )
    svg = svg_polyline(trace.steps[keep], pred, logx=True, title="fitted loss")
    _emit(args, report, csv_text, svg)
    return report


def _records(args):
    if not args.records:
        raise ValidationError(f"{args.command}: --records is required")
    return read_records_csv(_read_text(args.records))


def _horizons(args, fit) -> list[float]:
    if args.T:
        return _parse_floats(args.T, "--T")
    return [float(v) for v in np.geomspace(max(fit.T_min_cutoff, 1.0), 1e3 * max(fit.T_min_cutoff, 1.0), 13)]


def cmd_scale(args) -> dict:
    fit = fit_scaling(_records(args), T_min_cutoff=args.t_min, interpolate=args.interpolate)
    report = fit.to_dict()
    if fit.notes:
        report["notes"] = fit.notes
    horizons = _horizons(args, fit)
    csv_text = prediction_table_csv(fit, horizons)
    svg = svg_polyline(horizons, [predict_loss(fit, T) for T in horizons], logx=True, title="predicted loss")
    _emit(args, report, csv_text, svg)
    return report


def cmd_predict(args) -> dict:
    fit = fit_scaling(_records(args), T_min_cutoff=args.t_min, interpolate=args.interpolate)
    horizons = _horizons(args, fit)
    report = {
        "eta_ref_star": fit.eta_ref_star,
        "Q_star": fit.Q_star,
        "L_inf_star": fit.L_inf_star,
        "unit": fit.unit,
        "predictions": [{"T": T, "predicted_loss": predict_loss(fit, T),
                         "eta_peak_star": fit.eta_ref_star / math.sqrt(T)} for T in horizons],
    }
    if args.eta_small is not None:
        if args.T_small is None:
            raise ValidationError("predict: --eta-small requires --T-small")
        report["transfer"] = [
            {"T": T, "eta_peak": transfer_lr(args.eta_small, args.T_small, T)} for T in horizons
        ]
    csv_text = prediction_table_csv(fit, horizons)
    svg = svg_polyline(horizons, [predict_loss(fit, T) for T in horizons], logx=True, title="predicted loss")
    _emit(args, report, csv_text, svg)
    return report


def _sim_config(args) -> dict:
    cfg = {
        "problem": {"kind": "l1_distance", "d": 10, "D": 1.0, "G": 1.0, "noise_scale": 0.3, "seed": 0},
        "schedule": None,
        "seeds": 20,
        "T_list": None,
        "eta_list": None,
    }
    if args.config:
        text = args.config if args.config.lstrip().startswith("{") else _read_text(args.config)
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"--config: invalid JSON ({exc})") from None
        unknown = set(user) - set(cfg)
        if unknown:
            raise ValidationError(f"--config: unknown field(s) {sorted(unknown)}")
        if "problem" in user:
            cfg["problem"] = {**cfg["problem"], **user.pop("problem")}
        cfg.update(user)
    if args.schedule:
        cfg["schedule"] = json.loads(_load_schedule(args.schedule).to_json())
    if args.seeds is not None:
        cfg["seeds"] = args.seeds
    if cfg["schedule"] is None:
        raise ValidationError("simulate: a schedule is required (--schedule or config 'schedule')")
    return cfg


def cmd_simulate(args) -> dict:
    cfg = _sim_config(args)
    pr = cfg["problem"]
    problem = make_problem(pr["kind"], int(pr["d"]), float(pr["D"]), float(pr["G"]), float(pr["noise_scale"]), int(pr["seed"]))
    spec = ScheduleSpec.from_dict(cfg["schedule"])
    seeds = _parse_seeds(str(cfg["seeds"])) if not isinstance(cfg["seeds"], list) else [int(s) for s in cfg["seeds"]]
    report = {"resolved": cfg, "D_true": problem.D_true, "G_true": problem.G_true, "L_star": problem.L_star}
    if cfg["T_list"]:
        # Horizon sweep with eta_peak = eta_ref / sqrt(T): emits scaling records.
        etas = cfg["eta_list"] or [1.0]
        rows = []
        for eta_ref in etas:
            for T in cfg["T_list"]:
                lrs = eval_discrete(spec.with_horizon(int(T), float(eta_ref) / math.sqrt(int(T))))
                res = sgd_sweep(problem, lrs, seeds, [int(T)])
                rows.append({"eta_ref": float(eta_ref), "T": int(T),
                             "final_loss": float(res.last[:, 0].mean()),
                             "final_loss_averaged": float(res.averaged[:, 0].mean())})
        report["records"] = rows
        csv_text = "eta_ref,T_or_tokens,unit,final_loss\n" + "".join(
            f"{r['eta_ref']!r},{r['T']},steps,{r['final_loss']!r}\n" for r in rows
        )
        svg = svg_polyline([r["T"] for r in rows], [r["final_loss"] for r in rows], logx=True, title="final loss")
    else:
        lrs = eval_discrete(spec)
        grid = _parse_grid(args.grid, spec.T)
        res = sgd_sweep(problem, lrs, seeds, grid)
        mean, se = res.mean_and_stderr("last")
        amean, _ = res.mean_and_stderr("averaged")
        report.update({"steps": res.steps, "mean_loss": mean, "stderr": se, "mean_averaged_loss": amean,
                       "projections": int(res.projections.sum())})
        if np.array_equal(res.steps, np.arange(1, spec.T + 1)):
            csv_text = trace_to_csv(LossTrace(res.steps, mean, lrs=lrs))
        else:
            csv_text = trace_to_csv(LossTrace(res.steps, mean))
        svg = svg_polyline(res.steps, mean, logx=True, title="mean simulated loss")
    _emit(args, report, csv_text, svg)
    return report


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schedlaw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"schedlaw {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="JSON report path (stdout when omitted)")
        p.add_argument("--format", choices=["json", "csv", "svg"], default="json")

    def coeffs(p, defaults=(0.0, 1.0, 1.0)):
        p.add_argument("--L-star", dest="L_star", type=float, default=defaults[0])
        p.add_argument("--D", type=float, default=defaults[1])
        p.add_argument("--G", type=float, default=defaults[2])

    p = sub.add_parser("bound", help="loss bound trace for a schedule")
    p.add_argument("--schedule", required=True, help="schedule JSON file or inline JSON")
    coeffs(p)
    p.add_argument("--grid", default="log:1000", help="'all', 'log:N' or comma list of steps")
    p.add_argument("--bound", choices=[k.value for k in BoundKind], default=BoundKind.LAST_ITERATE.value)
    p.add_argument("--eta-peak", dest="eta_peak", type=float, help="override the schedule's peak learning rate")
    p.add_argument("--sqrt-scaled", action="store_true", help="use eta_peak = 1/sqrt(T)")
    common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("qualify", help="training-free schedule exam")
    p.add_argument("--kind")
    p.add_argument("--schedule")
    p.add_argument("--c", type=float)
    p.add_argument("--cycles", type=int, default=2)
    p.add_argument("--warmup-frac", dest="warmup_frac", type=float, default=0.0)
    p.add_argument("--t-grid", dest="t_grid", help="comma list of horizons")
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--G", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_qualify)

    p = sub.add_parser("fit", help="fit bound coefficients to a loss trace")
    p.add_argument("--trace", required=True, help="CSV with step,loss[,lr]")
    p.add_argument("--schedule", help="schedule JSON when the trace has no lr column")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--smooth", type=int, help="moving-average window (default n/200)")
    common(p)
    p.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("scale", cmd_scale, "fit loss = L_inf + Q/sqrt(T) per eta_ref"),
        ("predict", cmd_predict, "predict loss and optimal learning rate at new horizons"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--records", help="CSV eta_ref,T_or_tokens,unit,final_loss[,batch_size][,model_size]")
        p.add_argument("--t-min", dest="t_min", type=float)
        p.add_argument("--interpolate", action="store_true", help="fit a Q curve instead of the grid argmin")
        p.add_argument("--T", help="comma list of horizons for the prediction table")
        if name == "predict":
            p.add_argument("--eta-small", dest="eta_small", type=float)
            p.add_argument("--T-small", dest="T_small", type=float)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="seeded SGD on a convex problem")
    p.add_argument("--config", help="sweep config JSON {problem, schedule, seeds, T_list, eta_list}")
    p.add_argument("--schedule")
    p.add_argument("--seeds", help="count, 'a:b' range or comma list")
    p.add_argument("--grid", default="log:200")
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"schedlaw: error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"schedlaw: numeric failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
