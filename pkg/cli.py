#!/usr/bin/env python3
"""
Command-line runner for curvflux.

Reads one TOML experiment file, runs every [[experiment]] table and writes the
reports through report_store. Exit code 0 when every check passes, 1 when a
check fails or an experiment errors, 2 on configuration errors.
"""

import argparse
import json
import logging
import os
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import calculus
import experiments
import report_store
import surfaces
from experiments import ExperimentConfig, RunContext

VERSION = "0.3.0"

LOG_LEVEL = os.environ.get("CURVFLUX_LOG_LEVEL", "WARNING")

logger = logging.getLogger(__name__)

BASE_KEYS = {"kind", "id", "surface", "surface_params", "weight", "weight_params",
             "field", "field_params", "k", "ladder"}

# kinds whose identity only makes sense for the Gaussian weight
GAUSSIAN_KINDS = {"lemma-audit", "el-residual"}

# kinds that need a chart from the catalog
SURFACE_KINDS = {"flux", "volume"}

# runner options: name -> (element type, is a list, bounds); ints are >= low, floats lie strictly inside
OPTION_TYPES = {
    "cases": (int, False, (1, None)),
    "n_max": (int, False, (1, None)),
    "n": (int, False, (1, None)),
    "probe": (int, False, (1, None)),
    "audit_n_max": (int, False, (2, None)),
    "n_values": (int, True, (2, None)),
    "ks": (int, True, (1, None)),
    "radii": (float, True, (0.0, None)),
    "r_values": (float, True, (0.0, 1.0)),
    "targets": (float, True, (None, None)),
    "strict": (bool, False, (None, None)),
    "surfaces": (str, True, (None, None)),
    "weights": (str, True, (None, None)),
}


class ConfigError(Exception):
    """Config file cannot be parsed or references something that does not exist."""
    pass


@dataclass
class RunPlan:
    context: RunContext
    out_dir: str
    experiments: List[ExperimentConfig] = field(default_factory=list)


def load_config(path: str) -> Dict[str, object]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, 'rb') as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")


def parse_ladder(value) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    try:
        ladder = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"ladder must be a list of integers, got {value!r}")
    try:
        calculus.QuadratureSpec(resolutions=ladder)
    except calculus.QuadratureError as e:
        raise ConfigError(str(e))
    return ladder


def _table(raw: Dict[str, object], key: str, where: str) -> Dict[str, object]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: '{key}' must be a table")
    return dict(value)


def register_graphs(tables: Sequence[Dict[str, object]], catalog: Dict[str, surfaces.CatalogEntry]):
    for i, table in enumerate(tables):
        name = table.get("name")
        if not name:
            raise ConfigError(f"graph #{i + 1}: missing 'name'")
        try:
            surfaces.register_graph(str(name), _table(table, "coefficients", f"graph '{name}'"),
                                    float(table.get("half_width", 0.5)), catalog)
        except surfaces.CatalogError as e:
            raise ConfigError(str(e))


def _check_surface(name: str, params: Dict[str, object], catalog: Dict[str, surfaces.CatalogEntry],
                   where: str):
    entry = catalog.get(name)
    if entry is None:
        raise ConfigError(f"{where}: unknown surface id '{name}'")
    unknown = set(params) - set(entry.defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown parameters for '{name}': {sorted(unknown)}")


def _coerce(value, kind: type, bounds: tuple):
    if kind is bool:
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if kind is str:
        return str(value)
    if isinstance(value, bool) or (kind is int and isinstance(value, float) and not value.is_integer()):
        raise TypeError(f"expected {kind.__name__}, got {value!r}")
    value = kind(value)
    low, high = bounds
    if kind is int and low is not None and value < low:
        raise ValueError(f"{value} is below {low}")
    if kind is float and ((low is not None and value <= low) or (high is not None and value >= high)):
        raise ValueError(f"{value} outside ({low}, {high})")
    return value


def coerce_options(options: Dict[str, object], where: str) -> Dict[str, object]:
    """Type and range checks for runner options, so bad values fail before any experiment runs."""
    coerced = {}
    for key, value in options.items():
        if key not in OPTION_TYPES:
            logger.warning("%s: option '%s' is not used by any runner", where, key)
            coerced[key] = value
            continue
        kind, is_list, bounds = OPTION_TYPES[key]
        try:
            if is_list:
                if not isinstance(value, list):
                    raise TypeError(f"expected a list, got {value!r}")
                coerced[key] = [_coerce(v, kind, bounds) for v in value]
            else:
                coerced[key] = _coerce(value, kind, bounds)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}: bad option '{key}': {e}")
    return coerced


def dry_build(cfg: ExperimentConfig, catalog: Dict[str, surfaces.CatalogEntry], where: str):
    """Construct the chart, weight and field once and check k against the chart dimension."""
    try:
        charts = {}
        if cfg.surface is not None:
            charts[cfg.surface] = surfaces.build_surface(cfg.surface, cfg.surface_params, catalog)
        for name in cfg.options.get("surfaces", []):
            if name not in charts:
                charts[name] = surfaces.build_surface(name, {}, catalog)
        experiments.build_weight(cfg.weight, cfg.weight_params)
        experiments.build_field(cfg.field, cfg.field_params)
    except (TypeError, ValueError, ArithmeticError, surfaces.CatalogError, surfaces.SingularChartError) as e:
        raise ConfigError(f"{where}: {type(e).__name__}: {e}")

    if cfg.kind in SURFACE_KINDS:
        n = charts[cfg.surface].n
        if not 1 <= cfg.k <= n - 1:
            raise ConfigError(f"{where}: k={cfg.k} outside 1..{n - 1} for '{cfg.surface}'")
    if cfg.kind == "lemma-audit":
        for name, chart in charts.items():
            bad = [k for k in cfg.options.get("ks", [1, 2]) if not 1 <= k <= chart.n]
            if bad:
                raise ConfigError(f"{where}: ks {bad} outside 1..{chart.n} for '{name}'")


def parse_experiment(raw: Dict[str, object], index: int, default_ladder: tuple,
                     catalog: Dict[str, surfaces.CatalogEntry]) -> ExperimentConfig:
    kind = raw.get("kind")
    if kind not in experiments.RUNNERS:
        raise ConfigError(f"experiment #{index}: unknown kind {kind!r} "
                          f"(expected one of {sorted(experiments.RUNNERS)})")
    exp_id = str(raw.get("id", f"{kind}-{index}"))
    where = f"experiment '{exp_id}'"

    weight = str(raw.get("weight", "gaussian" if kind in GAUSSIAN_KINDS else "constant"))
    field_tag = str(raw.get("field", "position"))
    options = coerce_options({k: v for k, v in raw.items() if k not in BASE_KEYS}, where)

    surface_params = _table(raw, "surface_params", where)
    surface = raw.get("surface")
    if surface is not None:
        _check_surface(str(surface), surface_params, catalog, where)
    elif kind in SURFACE_KINDS or (kind == "el-residual" and not {"radii", "r_values"} & set(options)):
        raise ConfigError(f"{where}: kind '{kind}' needs a 'surface'")
    for name in options.get("surfaces", []):
        _check_surface(str(name), {}, catalog, where)

    for tag in [weight] + list(options.get("weights", [])):
        if tag not in surfaces.WEIGHTS:
            raise ConfigError(f"{where}: unknown weight tag '{tag}'")
    if field_tag not in surfaces.FIELDS:
        raise ConfigError(f"{where}: unknown field tag '{field_tag}'")

    try:
        k = _coerce(raw.get("k", 1), int, (None, None))
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: k must be an integer")

    ladder = parse_ladder(raw["ladder"]) if "ladder" in raw else default_ladder

    cfg = ExperimentConfig(
        kind=kind,
        id=exp_id,
        surface=None if surface is None else str(surface),
        surface_params=surface_params,
        weight=weight,
        weight_params=_table(raw, "weight_params", where),
        field=field_tag,
        field_params=_table(raw, "field_params", where),
        k=k,
        ladder=ladder,
        options=options,
    )
    dry_build(cfg, catalog, where)
    return cfg


def build_plan(raw: Dict[str, object], seed: Optional[int] = None, out_dir: Optional[str] = None,
               ladder: Optional[str] = None, float_tol: Optional[float] = None) -> RunPlan:
    """Validate a parsed config; command-line values win over file values."""
    try:
        context = RunContext(
            seed=int(raw.get("seed", 0) if seed is None else seed),
            float_tol=float(raw.get("float_tol", experiments.DEFAULT_FLOAT_TOL) if float_tol is None else float_tol),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad seed or float_tol: {e}")

    register_graphs(raw.get("graph", []), context.catalog)

    override = parse_ladder(ladder) if ladder is not None else None
    default_ladder = override or (parse_ladder(raw["ladder"]) if "ladder" in raw else calculus.DEFAULT_LADDER)

    tables = raw.get("experiment", [])
    if not tables:
        raise ConfigError("config defines no [[experiment]] tables")
    plan = RunPlan(context=context, out_dir=out_dir or str(raw.get("out_dir", report_store.OUT_DIR)))
    seen = set()
    for i, table in enumerate(tables, 1):
        cfg = parse_experiment(table, i, default_ladder, context.catalog)
        if override is not None:
            cfg = replace(cfg, ladder=override)
        if cfg.id in seen:
            raise ConfigError(f"duplicate experiment id '{cfg.id}'")
        if cfg.id == "summary":
            raise ConfigError("experiment id 'summary' is reserved for the run summary")
        seen.add(cfg.id)
        plan.experiments.append(cfg)
    return plan


def run(config_path: str, seed: Optional[int] = None, out_dir: Optional[str] = None,
        ladder: Optional[str] = None, float_tol: Optional[float] = None) -> int:
    plan = build_plan(load_config(config_path), seed, out_dir, ladder, float_tol)

    reports = []
    for cfg in plan.experiments:
        logger.info("running %s (%s)", cfg.id, cfg.kind)
        started = time.perf_counter()
        report = experiments.run_experiment(cfg, plan.context)
        elapsed = time.perf_counter() - started
        logger.info("%s finished in %.1fs", cfg.id, elapsed)
        report_store.write_report(report, plan.out_dir)
        reports.append(report)

        print(f"{cfg.id}: {report.status.upper()}")
        print(f"   Identity: {report.identity}")
        print(f"   Checks: {len(report.checks)} ({len(report.failed_checks)} failed)")
        print(f"   Time: {elapsed:.1f}s")
        if report.error:
            print(f"   Error: {report.error}")
        for name in report.failed_checks:
            print(f"   Failed: {name}")
        for name in report.exceeded_advisories:
            print(f"   Advisory exceeded: {name}")

    paths = report_store.write_summary(reports, plan.out_dir)
    failed = [r for r in reports if r.status != "pass"]
    print()
    if failed:
        print(f"Run finished with {len(failed)} failing experiment(s):")
        for r in failed:
            print(f"   {r.id} ({r.identity})")
    else:
        print("Run finished successfully!")
    print(f"   Reports: {plan.out_dir}")
    print(f"   Summary: {paths['csv']}")
    return 1 if failed else 0


def list_catalog(as_json: bool = False, config_path: Optional[str] = None) -> str:
    catalog = dict(surfaces.SURFACES)
    if config_path:
        register_graphs(load_config(config_path).get("graph", []), catalog)
    listing = surfaces.catalog_listing(catalog)
    if as_json:
        return json.dumps(listing, indent=2, sort_keys=True)

    lines = [f"Surfaces ({len(listing['surfaces'])}):", "-" * 60]
    for s in listing["surfaces"]:
        lines.append(f"{s['name']}  [{s['ambient']}]")
        lines.append(f"  {s['description']}")
        lines.append(f"  Parameters: {json.dumps(s['parameters'], sort_keys=True)}")
        if not s["chart"]:
            lines.append("  Analytic spectrum only")
    for title in ("weights", "fields"):
        lines.append("")
        lines.append(f"{title.capitalize()} ({len(listing[title])}):")
        lines.append("-" * 60)
        for item in listing[title]:
            lines.append(f"{item['name']}  {json.dumps(item['parameters'], sort_keys=True)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvflux",
                                 description="Numerical verification lab for weighted Newton transformations")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiments of a TOML config")
    run_p.add_argument("config", help="path to the experiment TOML file")
    run_p.add_argument("--out-dir", default=None, help="report directory (overrides out_dir)")
    run_p.add_argument("--seed", type=int, default=None, help="seed for the property suites")
    run_p.add_argument("--ladder", default=None, help='comma-separated resolutions, e.g. "32,64,128"')
    run_p.add_argument("--float-tol", type=float, default=None, help="float-vs-exact tolerance")

    cat_p = sub.add_parser("catalog", help="list surfaces, weights and fields")
    cat_p.add_argument("--json", action="store_true", help="machine-readable output")
    cat_p.add_argument("--config", default=None, help="also register the [[graph]] tables of a config")

    sub.add_parser("version", help="print the version")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL.upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run(args.config, args.seed, args.out_dir, args.ladder, args.float_tol)
        if args.command == "catalog":
            print(list_catalog(args.json, args.config))
            return 0
        print(f"curvflux {VERSION}")
        return 0
    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
