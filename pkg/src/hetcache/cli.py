"""Command-line surface: closed-form tables, Monte-Carlo runs, parameter
sweeps, analytic-vs-empirical comparison, and canned experiment configs.

All outputs are CSV with a single header row, floats printed to 10
significant digits, rows in deterministic order.  Exit codes: 0 success,
2 configuration error, 3 resource-guard error, 4 numeric failure.
"""

import argparse
import csv
import dataclasses
import math
import sys

from .errors import ConfigError, NumericError, ResourceLimitError, TrialError
from .harness import (
    SCENARIO_PRESETS,
    ExperimentConfig,
    MetricKey,
    analytic_table,
    compare_analytic,
    make_config,
    run_experiment,
)

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_KEYS = {"schemes", "delta_grid", "power_grid"}
_BOOL_KEYS = {"wrap", "measure_delay"}
_INT_KEYS = {"sbs_count", "mu_count", "num_files", "files_per_cache", "trials",
             "seed", "max_iters", "mu_probe", "workers"}
_STR_KEYS = {"scenario", "output"}


def fmt(value) -> str:
    """Render one CSV cell; floats get 10 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".10g")
    return str(value)


def parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _LIST_KEYS:
        items = [x for x in raw.split(",") if x]
        if key == "schemes":
            return tuple(items)
        return tuple(float(x) for x in items)
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config_file(path: str) -> dict:
    """Flat key=value file, '#' starts a comment, blank lines ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, raw = line.split("=", 1)
                key = key.strip()
                if key not in _CONFIG_FIELDS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = parse_value(key, raw)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


def add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file; flags override it")
    for name in _CONFIG_FIELDS:
        flag = "--" + name.replace("_", "-")
        parser.add_argument(flag, dest=name, default=None, metavar="V")


def build_config(args, require_seed: bool = False) -> ExperimentConfig:
    """Merge scenario preset, config file, and explicit flags (in that order)."""
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for name in _CONFIG_FIELDS:
        raw = getattr(args, name, None)
        if raw is not None:
            values[name] = raw if not isinstance(raw, str) else parse_value(name, raw)
    scenario = values.pop("scenario", "scenario1")
    if scenario not in SCENARIO_PRESETS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    config = make_config(scenario, **values)
    if require_seed and config.seed is None:
        raise ConfigError("--seed is required for this command")
    return config


def write_csv(path, header, rows):
    """Write one CSV; `path` of None means stdout."""
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            emit(fh)


SIMULATE_HEADER = ["scheme", "metric", "delta", "power", "s", "mean", "stderr", "trials"]


def write_simulate_csv(path, result):
    rows = [
        [key.scheme, key.metric, key.delta, key.power, key.s, mean, stderr, n]
        for key, mean, stderr, n in result.rows()
    ]
    write_csv(path, SIMULATE_HEADER, rows)


def read_simulate_csv(path):
    """Parse a simulate CSV back into (MetricKey, mean, stderr, n) rows."""
    rows = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != SIMULATE_HEADER:
                raise ConfigError(
                    f"{path}: unexpected columns {reader.fieldnames}, "
                    f"expected {SIMULATE_HEADER}"
                )
            for rec in reader:
                key = MetricKey(
                    scheme=rec["scheme"],
                    metric=rec["metric"],
                    delta=float(rec["delta"]),
                    power=float(rec["power"]),
                    s=float(rec["s"]),
                )
                rows.append((key, float(rec["mean"]), float(rec["stderr"]), int(rec["trials"])))
    except OSError as exc:
        raise ConfigError(f"cannot read stats file: {exc}") from exc
    return rows


def cmd_analyze(args):
    config = build_config(args)
    if not set(config.schemes) & {"fprc", "orc"}:
        config = dataclasses.replace(config, schemes=("fprc", "orc"))
    write_csv(args.output_path, ["quantity", "value"], analytic_table(config))
    return 0


def cmd_simulate(args):
    config = build_config(args, require_seed=True)
    if args.output_path is not None:
        config = dataclasses.replace(config, output=args.output_path)
    result = run_experiment(config)
    write_simulate_csv(config.output, result)
    return 0


def _sweep_rows(config, param, values):
    rows = []
    for value in values:
        if param == "delta":
            cfg = dataclasses.replace(config, delta=value, delta_grid=None)
        else:
            cfg = dataclasses.replace(config, zipf_s=value)
        result = run_experiment(cfg)
        analytic = {
            (c.scheme, c.metric): c
            for c in compare_analytic(result.rows(), cfg)
        }
        for key, mean, stderr, _ in result.rows():
            comp = analytic.get((key.scheme, key.metric))
            rows.append(
                [
                    value,
                    key.scheme,
                    key.metric,
                    mean,
                    stderr,
                    comp.analytic if comp else None,
                    comp.rel_err if comp else None,
                ]
            )
    return rows


def cmd_sweep(args):
    config = build_config(args, require_seed=True)
    if args.param not in ("delta", "s"):
        raise ConfigError("--param must be 'delta' or 's'")
    values = [float(v) for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("--values must list at least one number")
    rows = _sweep_rows(config, args.param, values)
    write_csv(args.output_path, ["param", "scheme", "metric", "mean", "stderr", "analytic", "rel_err"], rows)
    return 0


def cmd_compare(args):
    config = build_config(args)
    rows = read_simulate_csv(args.stats)
    if not rows:
        raise ConfigError(f"{args.stats}: no data rows")
    if args.delta is not None:
        want = float(args.delta)
        seen = sorted({key.delta for key, *_ in rows})
        if any(abs(d - want) > 1e-12 for d in seen):
            raise ConfigError(
                f"stats were produced with delta={seen}, but --delta says {want}"
            )
    if getattr(args, "zipf_s", None) is None:
        config = dataclasses.replace(config, zipf_s=rows[0][0].s)
    comparisons = compare_analytic(rows, config)
    out = [
        [c.scheme, c.metric, c.delta, c.power, c.empirical, c.stderr,
         c.analytic, c.rel_err, c.z, int(c.flagged)]
        for c in comparisons
    ]
    write_csv(
        args.output_path,
        ["scheme", "metric", "delta", "power", "empirical", "stderr", "analytic", "rel_err", "z", "flag"],
        out,
    )
    return 1 if any(c.flagged for c in comparisons) and args.strict else 0


REPRO_TARGETS = {
    "fig1": dict(kind="delta-grid", scenario="ppp-sweep", trials=500,
                 overrides=dict(measure_delay=False, delta_grid=(0.02, 0.04, 0.06, 0.08, 0.1),
                                power_grid=(2.0, 4.0))),
    "fig2": dict(kind="delta-grid", scenario="ppp-sweep", trials=500,
                 overrides=dict(measure_delay=False, delta_grid=(0.02, 0.04, 0.06, 0.08, 0.1),
                                power_grid=(2.0, 4.0))),
    "fig3": dict(kind="simulate", scenario="ppp-sweep", trials=500,
                 overrides=dict(delta=0.03, zipf_s=0.5, measure_delay=False)),
    "fig4": dict(kind="sweep", param="delta", values=(0.01, 0.03, 0.05, 0.07, 0.09),
                 scenario="ppp-sweep", trials=300, overrides=dict(zipf_s=0.5, measure_delay=False)),
    "fig5": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                 scenario="ppp-sweep", trials=300, overrides=dict(delta=0.03, measure_delay=False)),
    "fig6": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                 scenario="ppp-sweep", trials=300, overrides=dict(delta=0.03, measure_delay=True)),
    "fig7": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                 scenario="scenario1", trials=200, overrides={}),
    "fig8-case1": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                       scenario="scenario2-case1", trials=100, overrides={}),
    "fig8-case2": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                       scenario="scenario2-case2", trials=100, overrides={}),
    "fig9": dict(kind="sweep", param="s", values=(0.3, 0.5, 0.7, 0.9),
                 scenario="large-scale", trials=50, overrides={}),
    "table1": dict(kind="sweep", param="s", values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
                   scenario="scenario1", trials=100,
                   overrides=dict(schemes=("bp", "hbp"))),
}


def cmd_repro(args):
    spec = REPRO_TARGETS.get(args.target)
    if spec is None:
        raise ConfigError(
            f"unknown target {args.target!r}; choose from {sorted(REPRO_TARGETS)}"
        )
    overrides = dict(spec["overrides"])
    overrides["trials"] = args.trials if args.trials else spec["trials"]
    overrides["seed"] = args.seed
    config = make_config(spec["scenario"], **overrides)
    if spec["kind"] == "simulate":
        result = run_experiment(config)
        write_simulate_csv(args.output_path, result)
    elif spec["kind"] == "delta-grid":
        result = run_experiment(config)
        analytic = {
            (c.scheme, c.metric, c.delta, c.power): c
            for c in compare_analytic(result.rows(), config)
        }
        rows = []
        for key, mean, stderr, _ in result.rows():
            comp = analytic.get((key.scheme, key.metric, key.delta, key.power))
            rows.append([key.delta, key.scheme, f"{key.metric}|power={fmt(key.power)}",
                         mean, stderr, comp.analytic if comp else None,
                         comp.rel_err if comp else None])
        write_csv(args.output_path, ["param", "scheme", "metric", "mean", "stderr", "analytic", "rel_err"], rows)
    else:
        rows = _sweep_rows(config, spec["param"], list(spec["values"]))
        write_csv(args.output_path, ["param", "scheme", "metric", "mean", "stderr", "analytic", "rel_err"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetcache",
        description="Cache-placement optimization and analysis for small-cell networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form tables, no simulation")
    add_config_flags(p)
    p.add_argument("-o", "--output", dest="output_path", default=None)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte-Carlo run for one configuration")
    add_config_flags(p)
    p.add_argument("-o", "--output", dest="output_path", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="grid over delta or the popularity exponent")
    add_config_flags(p)
    p.add_argument("--param", required=True, choices=("delta", "s"))
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("-o", "--output", dest="output_path", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare", help="analytic vs a prior simulate CSV")
    add_config_flags(p)
    p.add_argument("--stats", required=True, help="CSV produced by `simulate`")
    p.add_argument("--strict", action="store_true", help="exit nonzero on flagged rows")
    p.add_argument("-o", "--output", dest="output_path", default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("repro", help="canned experiment configurations")
    p.add_argument("--target", required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", dest="output_path", default=None)
    p.set_defaults(fn=cmd_repro)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except TrialError as exc:
        print(f"trial failure: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
