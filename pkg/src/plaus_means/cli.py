"""Command-line interface: estimation, intervals, studies, bundled real data.

Exit codes: 0 on success, 2 for unusable input or parameters, 3 when a
numerical solve fails.  Every output document embeds the fully resolved run
configuration so results are reproducible from the file alone.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import (
    InvalidParameterError,
    OptimizerFailureError,
)
from .baselines import (
    chi_square_cdf,
    efron_morris,
    efron_morris_factor,
    mean_removed_statistic,
)
from .datasets import sat_coaching
from .deconv import within_experiment_diagnostic
from .estimators import DEFAULT_ALPHA, DEFAULT_PI, ClassicMeans, EmpiricalBayesMeans
from .simulate import (
    COVERAGE_LEVELS,
    MSE_METHODS,
    SCENARIO_NAMES,
    Scenario,
    run_coverage_study,
    run_mse_study,
)

DEFAULT_K = 200
DEFAULT_CN = 0.6667
DEFAULT_NU = 2.0


class InputFileError(ValueError):
    """Unparseable input file; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class ObservationInput:
    """Observations plus the optional (y, s) columns they were scaled from."""

    x: np.ndarray
    y: np.ndarray | None = None
    s: np.ndarray | None = None

    @property
    def scaled(self) -> bool:
        return self.y is not None


def read_observations(path: str | Path) -> ObservationInput:
    """Parse a plain one-number-per-line file or a CSV with y,s columns."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise InputFileError("input file is empty")

    header_line = next(line for line in lines if line.strip())
    header = [h.strip().lower() for h in header_line.split(",")]
    if "y" in header and "s" in header:
        return _read_scaled_csv(text)

    values = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            values.append(float(stripped))
        except ValueError as exc:
            raise InputFileError(f"expected one number, got {stripped!r}", lineno) from exc
    return ObservationInput(x=np.array(values))


def _read_scaled_csv(text: str) -> ObservationInput:
    reader = csv.DictReader(io.StringIO(text))
    fields = [f.strip().lower() for f in reader.fieldnames or []]
    y_key = (reader.fieldnames or [])[fields.index("y")]
    s_key = (reader.fieldnames or [])[fields.index("s")]
    ys, ss = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            y = float(row[y_key])
            s = float(row[s_key])
        except (TypeError, ValueError, KeyError) as exc:
            raise InputFileError(f"bad y,s row {row!r}", lineno) from exc
        if s <= 0:
            raise InputFileError(f"standard error must be positive, got {s}", lineno)
        ys.append(y)
        ss.append(s)
    if not ys:
        raise InputFileError("no data rows in y,s file")
    y = np.array(ys)
    s = np.array(ss)
    return ObservationInput(x=y / s, y=y, s=s)


# -- output writers ---------------------------------------------------------


def _write_json(path: str | Path, document: dict) -> None:
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: str | Path, records: list[dict], config: dict) -> None:
    if not records:
        raise InvalidParameterError("nothing to write")
    config_json = json.dumps(config, sort_keys=True)
    fieldnames = list(records[0].keys()) + ["config_json"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for rec in records:
            writer.writerow({**rec, "config_json": config_json})


def _emit(args, records: list[dict], config: dict, extras: dict | None = None) -> None:
    if args.format == "json":
        doc = {"config": config, "records": records}
        doc.update(extras or {})
        _write_json(args.output, doc)
    else:
        flat = records
        if extras:
            scalar = {
                k: v for k, v in extras.items() if isinstance(v, (int, float, str, bool))
            }
            flat = [{**rec, **scalar} for rec in records]
        _write_csv(args.output, flat, config)


def _resolved_config(args, command: str) -> dict:
    skip = {"func", "input", "output"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip and not k.startswith("_")}
    cfg["command"] = command
    cfg["version"] = __version__
    for key, value in list(cfg.items()):
        if isinstance(value, np.generic):
            cfg[key] = value.item()
    return cfg


# -- commands ----------------------------------------------------------------


def _scale_record(rec: dict, s_i: float, keys: tuple[str, ...]) -> dict:
    rec = dict(rec)
    for key in keys:
        rec[f"mu_{key}"] = rec[key] * s_i
    return rec


def cmd_estimate(args) -> int:
    data = read_observations(args.input)
    config = _resolved_config(args, "estimate")
    if args.kind == "eb":
        est = EmpiricalBayesMeans(
            K=args.grid_size, c_n=args.c_n, nu=args.nu, slack=args.slack, seed=args.seed
        ).fit(data.x)
        lows, highs = est.theta_extremes()
        mids = 0.5 * (lows + highs)
        records = [
            {
                "index": i + 1,
                "x": float(data.x[i]),
                "estimate_lower": float(lows[i]),
                "estimate_upper": float(highs[i]),
                "estimate_mid": float(mids[i]),
            }
            for i in range(data.x.size)
        ]
        value_keys = ("estimate_lower", "estimate_upper", "estimate_mid")
    else:
        estimates = ClassicMeans(c_n=args.c_n, nu=args.nu).fit(data.x).point_estimates()
        records = [
            {"index": i + 1, "x": float(data.x[i]), "estimate": float(estimates[i])}
            for i in range(data.x.size)
        ]
        value_keys = ("estimate",)
    if data.scaled:
        records = [
            _scale_record(rec, float(data.s[i]), value_keys) for i, rec in enumerate(records)
        ]
        for i, rec in enumerate(records):
            rec["y"] = float(data.y[i])
            rec["s"] = float(data.s[i])
    _emit(args, records, config)
    return 0


def cmd_intervals(args) -> int:
    data = read_observations(args.input)
    config = _resolved_config(args, "intervals")
    est = EmpiricalBayesMeans(
        K=args.grid_size,
        c_n=args.c_n,
        nu=args.nu,
        alpha=args.alpha,
        pi=args.pi,
        mc_samples=args.mc_samples,
        slack=args.slack,
        seed=args.seed,
    ).fit(data.x)
    intervals = est.intervals()
    count, expected = within_experiment_diagnostic(intervals, est.sample_, args.alpha)
    records = [
        {
            "index": i + 1,
            "x": float(data.x[i]),
            "lower": float(intervals.lower[i]),
            "upper": float(intervals.upper[i]),
            "alpha": args.alpha,
            "pi": args.pi,
        }
        for i in range(data.x.size)
    ]
    if data.scaled:
        records = [
            _scale_record(rec, float(data.s[i]), ("lower", "upper")) for i, rec in enumerate(records)
        ]
    extras = {
        "outside_count": count,
        "outside_expected": expected,
    }
    _emit(args, records, config, extras)
    return 0


def cmd_adaptive(args) -> int:
    data = read_observations(args.input)
    config = _resolved_config(args, "adaptive")
    est = EmpiricalBayesMeans(
        K=args.grid_size,
        c_n=args.c_n,
        nu=args.nu,
        mc_samples=args.mc_samples,
        slack=args.slack,
        seed=args.seed,
    ).fit(data.x)
    result = est.adaptive_intervals(
        target_coverage=args.target, m=args.m, reps=args.reps
    )
    records = [
        {
            "index": i + 1,
            "x": float(data.x[i]),
            "lower": float(result.intervals.lower[i]),
            "upper": float(result.intervals.upper[i]),
        }
        for i in range(data.x.size)
    ]
    if data.scaled:
        records = [
            _scale_record(rec, float(data.s[i]), ("lower", "upper")) for i, rec in enumerate(records)
        ]
    ladder = [
        {
            "s": s + 1,
            "level": float(result.ladder_levels[s]),
            "simulated_coverage": float(result.ladder_coverage[s]),
        }
        for s in range(result.ladder_levels.size)
    ]
    ladder_path = str(args.output) + ".ladder.csv"
    _write_csv(ladder_path, ladder, config)
    extras = {
        "s_star": result.s_star,
        "level": result.level,
        "calibrated": result.calibrated,
        "suggested_coverage": float(result.ladder_coverage[result.s_star - 1]),
        "ladder": ladder,
    }
    _emit(args, records, config, extras)
    return 0


def resolve_scale(paper_scale: bool, grid_size: int, M: int) -> tuple[int, int]:
    """Published-scale defaults (K=1000, M=200) unless explicitly overridden."""
    if paper_scale:
        grid_size = 1000 if grid_size == DEFAULT_K else grid_size
        M = 200 if M == 50 else M
    return grid_size, M


def cmd_simulate(args) -> int:
    config = _resolved_config(args, "simulate")
    K, M = resolve_scale(args.paper_scale, args.grid_size, args.M)
    scenario = Scenario(name=args.scenario, n=args.n)
    if args.study == "mse":
        report = run_mse_study(
            scenario,
            methods=tuple(args.methods),
            M=M,
            K=K,
            rng_seed=args.seed,
            eb_slack=args.slack,
        )
        records = [
            {"method": name, "mse_mean": row.mean, "mse_se": row.se, "failures": row.failures}
            for name, row in report.mse.items()
        ]
    else:
        report = run_coverage_study(
            scenario,
            levels=tuple(args.levels),
            M=M,
            K=K,
            rng_seed=args.seed,
            mc_samples=args.mc_samples,
            eb_slack=args.slack,
        )
        records = [
            {
                "level": name,
                "coverage_percent": row.coverage_percent,
                "mean_length": row.mean_length,
                "threshold": row.threshold,
            }
            for name, row in report.coverage.items()
        ]
    config["resolved_K"] = K
    config["resolved_M"] = M
    _emit(args, records, config, {"report": report.to_dict()} if args.format == "json" else None)
    return 0


def cmd_real_data(args) -> int:
    config = _resolved_config(args, "real-data")
    data = sat_coaching()
    x = data.x
    est = EmpiricalBayesMeans(
        K=args.grid_size, mc_samples=args.mc_samples, slack=args.slack, seed=args.seed
    ).fit(x)
    lows, highs = est.theta_extremes()
    adaptive = est.adaptive_intervals(target_coverage=args.target, m=args.m, reps=args.reps)
    em = efron_morris(x).values
    s_sq = mean_removed_statistic(x)
    cdf_value = chi_square_cdf(s_sq, df=x.size - 1)
    records = [
        {
            "index": i + 1,
            "x": float(x[i]),
            "lower_mean_curve": float(lows[i]),
            "upper_mean_curve": float(highs[i]),
            "ci_lower": float(adaptive.intervals.lower[i]),
            "ci_upper": float(adaptive.intervals.upper[i]),
            "reference_estimate": float(em[i]),
            "y": float(data.y[i]),
            "s": float(data.s[i]),
            "mu_ci_lower": float(adaptive.intervals.lower[i] * data.s[i]),
            "mu_ci_upper": float(adaptive.intervals.upper[i] * data.s[i]),
        }
        for i in range(x.size)
    ]
    extras = {
        "s_squared": s_sq,
        "chi2_cdf": cdf_value,
        "chi2_df": x.size - 1,
        "em_shrinkage_factor": efron_morris_factor(x),
        "s_star": adaptive.s_star,
        "suggested_coverage": float(adaptive.ladder_coverage[adaptive.s_star - 1]),
    }
    _emit(args, records, config, extras)
    return 0


# -- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
    if with_input:
        p.add_argument("--input", required=True, help="input data file")
    p.add_argument("--output", required=True, help="output file path")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--grid-size", type=int, default=DEFAULT_K, dest="grid_size")
    p.add_argument("--c-n", type=float, default=DEFAULT_CN, dest="c_n")
    p.add_argument("--nu", type=float, default=DEFAULT_NU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slack", type=float, default=1e-6, help="score slack defining the top region")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plaus-means",
        description="Point and interval estimation for many normal means",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="per-observation point estimates")
    _add_common(p)
    p.add_argument("--kind", choices=("eb", "classic"), default="eb")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("intervals", help="region-optimized interval estimates")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--pi", type=float, default=DEFAULT_PI)
    p.add_argument("--mc-samples", type=int, default=100_000, dest="mc_samples")
    p.set_defaults(func=cmd_intervals)

    p = sub.add_parser("adaptive", help="Monte Carlo tuned intervals")
    _add_common(p)
    p.add_argument("--target", type=float, default=0.95)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--mc-samples", type=int, default=100_000, dest="mc_samples")
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("simulate", help="benchmark replication studies")
    _add_common(p, with_input=False)
    p.add_argument("--study", choices=("mse", "coverage"), required=True)
    p.add_argument("--scenario", choices=SCENARIO_NAMES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--M", type=int, default=50)
    p.add_argument("--methods", nargs="+", choices=MSE_METHODS, default=list(MSE_METHODS))
    p.add_argument("--levels", nargs="+", choices=COVERAGE_LEVELS, default=list(COVERAGE_LEVELS))
    p.add_argument("--mc-samples", type=int, default=100_000, dest="mc_samples")
    p.add_argument(
        "--paper-scale",
        action="store_true",
        help="use the full published scale (K=1000, M=200) unless overridden",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("real-data", help="bundled eight-school analysis")
    _add_common(p, with_input=False)
    p.add_argument("--target", type=float, default=0.95)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--mc-samples", type=int, default=100_000, dest="mc_samples")
    p.set_defaults(func=cmd_real_data)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InputFileError, InvalidParameterError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OptimizerFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
