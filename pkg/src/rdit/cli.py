"""Command-line front end.

Settings come from built-in defaults, then an optional TOML file
(``--config``), then flags; later sources win. Exit status is 0 on success
and the ``exit_code`` of the raised error class otherwise.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import report
from .breaks import estimate_breaks
from .counterfactual import projection_series, run_monte_carlo, vsl_scale
from .errors import CheckFailure, ConfigError, EmptyCorpusError, RditError
from .months import format_month, parse_month
from .rd import RdConfig, estimate_rd
from .robustness import (
    DonutSpec,
    anova_by_exposure,
    autocorrelation_diagnostic,
    donut_rd,
    falsification_rd,
    polynomial_sweep,
    rd_residuals,
    rolling_rd,
)
from .strikes import build_monthly_panel, parse_strike_csv, summary_table

log = logging.getLogger("rdit")

DATA_ENV = "RDIT_DATA"
MAIN_OUTCOMES = ("civilian_casualties", "strike_precision", "civ_per_strike")


@dataclass
class RunConfig:
    data: str | None = None
    schema: dict[str, str] = field(default_factory=dict)
    date_format: str | None = None
    cutoff: str = "2011-07"
    announcement_cutoff: str = "2013-05"
    policy: str = "strike_months_only"
    outcomes: list[str] = field(default_factory=lambda: list(MAIN_OUTCOMES))
    bandwidth: list[str] = field(default_factory=lambda: ["mserd", "manual:48"])
    p: int = 1
    q: int = 2
    kernel: str = "triangular"
    donut: list[str] = field(default_factory=lambda: ["3", "6", "9", "full"])
    donut_center: str = "2012-04"
    rolling_window: str = "2010-10:2013-05"
    rolling_bandwidth: float = 48.0
    orders: list[int] = field(default_factory=lambda: [1, 2, 3])
    max_breaks: int = 3
    trimming: float = 0.15
    break_model: str = "mean_shift"
    detrend: bool = False
    placebo_series: str | None = None
    iterations: int = 5000
    seed: int = 20130523
    pool_start: str | None = "2009-01"
    vsl_low: float = 200_000.0
    vsl_high: float = 800_000.0
    out: str = "out"

    def rd_config(self, outcome: str, bandwidth: str) -> RdConfig:
        return RdConfig(
            cutoff=self.cutoff, outcome=outcome, p=self.p, q=self.q, kernel=self.kernel, bandwidth=parse_bandwidth(bandwidth)
        )


def parse_bandwidth(text: str) -> str | float:
    text = str(text).strip()
    if text == "mserd":
        return "mserd"
    if text.startswith("manual:"):
        try:
            return float(text.split(":", 1)[1])
        except ValueError:
            pass
    raise ConfigError(f"bandwidth must be 'mserd' or 'manual:N', got {text!r}")


def parse_window(text: str) -> tuple[str, str]:
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"window must look like YYYY-MM:YYYY-MM, got {text!r}")
    lo, hi = (format_month(parse_month(p)) for p in parts)
    return lo, hi


def _split(value: Any) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value if str(v).strip()]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def parse_schema(value: Any) -> dict[str, str]:
    """Column map from a dict, a TOML/JSON file, or ``key=Header,...`` pairs."""
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    text = str(value)
    path = Path(text)
    if path.is_file():
        raw = path.read_bytes()
        if path.suffix == ".json":
            import json

            return parse_schema(json.loads(raw))
        return parse_schema(tomllib.loads(raw.decode("utf-8")))
    out = {}
    for pair in _split(text):
        if "=" not in pair:
            raise ConfigError(f"schema entries must be logical=Header, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def donut_specs(cfg: RunConfig) -> list[DonutSpec]:
    specs = []
    for item in cfg.donut:
        if item == "full":
            specs.append(DonutSpec.spanning(cfg.cutoff, cfg.announcement_cutoff))
        elif ":" in item:
            specs.append(DonutSpec.spanning(*parse_window(item)))
        else:
            try:
                specs.append(DonutSpec(center=cfg.donut_center, half_width=int(item)))
            except ValueError:
                raise ConfigError(f"donut entries are half-widths, 'full' or YYYY-MM:YYYY-MM, got {item!r}") from None
    return specs


# --------------------------------------------------------------------------
# configuration assembly
# --------------------------------------------------------------------------

_LIST_KEYS = {"outcomes", "bandwidth", "donut"}
_INT_KEYS = {"p", "q", "max_breaks", "iterations", "seed"}
_FLOAT_KEYS = {"trimming", "vsl_low", "vsl_high", "rolling_bandwidth"}


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    try:
        if key in _LIST_KEYS:
            return _split(value)
        if key == "orders":
            return [int(v) for v in _split(value)]
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "detrend":
            return bool(value)
        if key == "schema":
            return parse_schema(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
    return value


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, Any] = {}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                loaded = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {args.config}: {exc}") from None
        for k, v in loaded.items():
            key = k.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {k!r}")
            values[key] = _coerce(key, v)
    for key in known:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _coerce(key, v)
    if values.get("data") is None and os.environ.get(DATA_ENV):
        values["data"] = os.environ[DATA_ENV]
    cfg = RunConfig(**values)
    for b in cfg.bandwidth:
        parse_bandwidth(b)
    parse_month(cfg.cutoff)
    parse_month(cfg.announcement_cutoff)
    parse_window(cfg.rolling_window)
    if cfg.iterations < 1:
        raise ConfigError("iterations must be positive")
    return cfg


def load_records(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError(f"no data file: pass --data or set {DATA_ENV}")
    path = Path(cfg.data)
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    records = parse_strike_csv(path, cfg.schema or None, date_format=cfg.date_format)
    if not records:
        raise EmptyCorpusError(f"{path} holds no strike records")
    return records


def _dirs(cfg: RunConfig) -> tuple[Path, Path, Path]:
    out = Path(cfg.out)
    return out / "tables", out / "plots", out / "verdicts"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_summarize(cfg: RunConfig, records=None) -> list[Path]:
    records = records if records is not None else load_records(cfg)
    tables = []
    for cutoff in (cfg.cutoff, cfg.announcement_cutoff):
        panel = build_monthly_panel(records, cutoff, cfg.policy)
        tables.append(summary_table(panel, records, cutoff))
    tdir, _, _ = _dirs(cfg)
    header, rows = report.summary_rows(tables)
    return [
        report.write_csv(tdir / "summary.csv", header, rows),
        report.write_json(tdir / "summary.json", report.summary_json(tables, cfg.policy)),
    ]


def cmd_estimate(cfg: RunConfig, records=None) -> list[Path]:
    records = records if records is not None else load_records(cfg)
    panel = build_monthly_panel(records, cfg.cutoff, cfg.policy)
    columns = []
    for bw in cfg.bandwidth:
        for outcome in cfg.outcomes:
            try:
                est = estimate_rd(panel, cfg.rd_config(outcome, bw))
            except RditError as exc:
                if isinstance(exc, ConfigError):
                    raise
                log.warning("estimate %s [%s] failed: %s", outcome, bw, exc)
                columns.append(report.EstimateColumn(outcome, bw, None, str(exc)))
            else:
                columns.append(report.EstimateColumn(outcome, bw, est))
    if all(c.estimate is None for c in columns):
        raise next(_errors(columns))
    tdir, pdir, _ = _dirs(cfg)
    header, rows = report.estimate_rows(columns)
    paths = [
        report.write_csv(tdir / "estimates.csv", header, rows),
        report.write_json(tdir / "estimates.json", report.estimate_json(columns)),
    ]
    for outcome in cfg.outcomes:
        paths.append(report.raw_data_plot(panel, outcome).save(pdir / f"raw_{outcome}.svg"))
    return paths


def _errors(columns):
    from .errors import EstimationError

    for c in columns:
        yield EstimationError(f"every estimate failed; first error: {c.error}")


def _read_series(path: str) -> dict[str, float]:
    out = {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for line in reader:
            if len(line) >= 2 and line[0].strip():
                try:
                    out[format_month(parse_month(line[0]))] = float(line[1])
                except ValueError:
                    raise ConfigError(f"bad row in placebo series {path}: {line!r}") from None
    return out


def cmd_validate(cfg: RunConfig, records=None) -> tuple[list[Path], str]:
    """Run every robustness check; a failing check never stops the others."""
    records = records if records is not None else load_records(cfg)
    panel = build_monthly_panel(records, cfg.cutoff, cfg.policy)
    _, pdir, vdir = _dirs(cfg)
    main_cfg = cfg.rd_config("civilian_casualties", cfg.bandwidth[0])
    verdicts: list[report.Verdict] = []
    paths: list[Path] = []

    def attempt(name, fn):
        try:
            return fn(), None
        except RditError as exc:
            log.warning("%s failed: %s", name, exc)
            return None, str(exc)

    series = list(zip(panel.month_indices.tolist(), panel.outcome("civilian_casualties").tolist()))
    brk, err = attempt(
        "break detection",
        lambda: estimate_breaks(
            series, cfg.max_breaks, cfg.trimming, cfg.break_model, detrend_first=cfg.detrend, seed=cfg.seed
        ),
    )
    verdicts.append(
        report.break_verdict(brk, cfg.cutoff)
        if brk
        else report.Verdict("structural_break", report.INDETERMINATE, err or "")
    )

    window = parse_window(cfg.rolling_window)
    roll_cfg = RdConfig(
        cutoff=cfg.cutoff, outcome="civilian_casualties", p=1, q=2, kernel="triangular", bandwidth=cfg.rolling_bandwidth
    )
    roll, err = attempt("rolling", lambda: rolling_rd(records, roll_cfg, window, cfg.policy))
    shade = report.break_window(brk, cfg.cutoff)
    if roll is not None:
        verdicts.append(report.rolling_verdict(roll, shade))
        paths.append(report.rolling_plot(roll, shade).save(pdir / "rolling.svg"))
    else:
        verdicts.append(report.Verdict("rolling_cutoff", report.INDETERMINATE, err or ""))

    main, main_err = attempt("main estimate", lambda: estimate_rd(panel, main_cfg))
    donuts = []
    for spec in donut_specs(cfg):
        est, err = attempt(f"donut {spec.label}", lambda: donut_rd(panel, main_cfg, spec))
        donuts.append((spec.label, est, err))
    verdicts.append(report.sign_verdict("donut", main, donuts))
    full = donut_specs(cfg)[-1] if cfg.donut else None
    paths.append(
        report.raw_data_plot(panel, "civilian_casualties", full.excluded_range if full else None).save(
            pdir / "donut_civilian_casualties.svg"
        )
    )

    placebo_series = _read_series(cfg.placebo_series) if cfg.placebo_series else None
    placebos = ["strike_count", "combatant_casualties"] + (["custom"] if placebo_series else [])
    for outcome in placebos:
        est, err = attempt(
            f"placebo {outcome}", lambda: falsification_rd(panel, outcome, main_cfg, placebo_series)
        )
        verdicts.append(report.placebo_verdict(outcome, est, err))

    sweep = polynomial_sweep(panel, main_cfg, cfg.orders)
    verdicts.append(report.sign_verdict("polynomial_order", main, [(f"p={s.order}", s.estimate, s.error) for s in sweep]))

    ac, err = attempt("autocorrelation", lambda: autocorrelation_diagnostic(rd_residuals(panel)))
    if ac is None:
        verdicts.append(report.Verdict("autocorrelation", report.INDETERMINATE, err or ""))
    else:
        stats = dataclasses.asdict(ac)
        if ac.degenerate:
            verdicts.append(report.Verdict("autocorrelation", report.INDETERMINATE, "constant residual series", stats))
        else:
            ok = not ac.motivates_lag()
            verdicts.append(
                report.Verdict(
                    "autocorrelation",
                    report.PASS if ok else report.FAIL,
                    f"lag-1 coefficient {ac.lag1_coefficient:.3f}, p {ac.p_value:.3f}",
                    stats,
                )
            )

    for cutoff in (cfg.cutoff, cfg.announcement_cutoff):
        for outcome in ("civilian", "precision", "civ_per_strike"):
            res, err = attempt(f"anova {outcome}", lambda: anova_by_exposure(records, cutoff, outcome))
            check = f"anova_{outcome}_{cutoff}"
            if res is None:
                verdicts.append(report.Verdict(check, report.INDETERMINATE, err or ""))
            else:
                ok = res.p_value < 0.05
                verdicts.append(
                    report.Verdict(check, report.PASS if ok else report.FAIL, f"F {res.f_stat:.3f}, p {res.p_value:.4f}", res.to_dict())
                )

    for v in verdicts:
        paths.append(report.write_json(vdir / f"{v.check}.json", v.to_dict()))
    verdict = report.overall(verdicts)
    paths.append(
        report.write_json(
            vdir / "bundle.json",
            {"overall": verdict, "checks": [{"check": v.check, "verdict": v.verdict, "detail": v.detail} for v in verdicts]},
        )
    )
    return paths, verdict


def cmd_simulate(cfg: RunConfig, records=None) -> list[Path]:
    records = records if records is not None else load_records(cfg)
    res = run_monte_carlo(records, cfg.cutoff, cfg.iterations, cfg.seed, pool_start=cfg.pool_start)
    res = vsl_scale(res, cfg.vsl_low, cfg.vsl_high)
    panel = build_monthly_panel(records, cfg.cutoff, cfg.policy)
    pts = projection_series(res, panel)
    tdir, pdir, _ = _dirs(cfg)
    payload = res.to_dict()
    payload["projection"] = [dataclasses.asdict(p) for p in pts]
    return [
        report.write_json(tdir / "simulation.json", payload),
        report.projection_plot(pts).save(pdir / "projection.svg"),
    ]


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="TOML file with settings; flags override it")
    a("--data", help=f"strike CSV (default: ${DATA_ENV})")
    a("--schema", help="column map: logical=Header pairs, or a TOML/JSON file")
    a("--date-format", dest="date_format", help="strptime format of the date column")
    a("--cutoff", help="treatment month, YYYY-MM (default 2011-07)")
    a("--announcement-cutoff", dest="announcement_cutoff", help="second summary cutoff (default 2013-05)")
    a("--policy", choices=["strike_months_only", "all_calendar_months_zero_filled"])
    a("--outcomes", help="comma-separated outcome names")
    a("--bandwidth", help="comma-separated list of mserd and manual:N")
    a("--kernel", choices=["triangular", "uniform", "epanechnikov"])
    a("--donut", help="comma-separated half-widths, 'full', or YYYY-MM:YYYY-MM ranges")
    a("--donut-center", dest="donut_center", help="center month of half-width donuts")
    a("--rolling-window", dest="rolling_window", help="YYYY-MM:YYYY-MM")
    a("--rolling-bandwidth", dest="rolling_bandwidth", type=float)
    a("--orders", help="comma-separated polynomial orders")
    a("--max-breaks", dest="max_breaks", type=int)
    a("--trimming", type=float)
    a("--break-model", dest="break_model", choices=["mean_shift", "trend_shift"])
    a("--detrend", action="store_true", default=None)
    a("--placebo-series", dest="placebo_series", help="CSV of month,value for a custom placebo outcome")
    a("--iterations", type=int)
    a("--seed", type=int)
    a("--pool-start", dest="pool_start", help="first donor month for the simulation")
    a("--vsl-low", dest="vsl_low", type=float)
    a("--vsl-high", dest="vsl_high", type=float)
    a("--out", help="output directory (default ./out)")
    a("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rdit", description="Regression discontinuity in time for strike casualty data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("summarize", "pre/post summary table"),
        ("estimate", "RD estimate table and raw-data plots"),
        ("validate", "robustness checks and verdicts"),
        ("simulate", "Monte Carlo averted casualties"),
        ("all", "every command in turn"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
        records = load_records(cfg)
        paths: list[Path] = []
        verdict = None
        if args.command in ("summarize", "all"):
            paths += cmd_summarize(cfg, records)
        if args.command in ("estimate", "all"):
            paths += cmd_estimate(cfg, records)
        if args.command in ("validate", "all"):
            vpaths, verdict = cmd_validate(cfg, records)
            paths += vpaths
        if args.command in ("simulate", "all"):
            paths += cmd_simulate(cfg, records)
        for p in paths:
            print(p)
        if verdict == report.FAIL:
            raise CheckFailure("at least one robustness check failed; see verdicts/bundle.json")
    except RditError as exc:
        print(f"rdit: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
