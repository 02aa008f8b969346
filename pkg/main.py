#!/usr/bin/env python3
"""
Consumption Voucher Impact Analyzer - command line entry point
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import pandas as pd

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from analysis.bootstrap import BootstrapConfig, StratifiedBootstrap
from analysis.estimators import EffectEstimator, Metric
from analysis.input_output import (
    ImpactModel,
    demand_table,
    load_scenarios,
    load_table,
    scenarios_from_regions,
    write_scenarios,
)
from collectors.models import StratificationScheme, Wave, parse_waves
from collectors.survey_collector import SurveyCollector, load_voucher_specs, sample_structure
from config import settings
from config.errors import (
    ConfigurationError,
    EstimationError,
    NumericalError,
    SurveyValidationError,
    TableValidationError,
)
from reporting.charts import plot_data, write_charts
from reporting.reports import ReportWriter, RunManifest
from simulation.population import load_population, simulate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def setup_logging(verbose=False):
    """Setup logging configuration"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.captureWarnings(True)


def _env_int(name, default):
    """Integer environment default; a malformed value is a configuration error."""
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got '{raw}'") from None


def _seed(args, default=settings.SEED):
    """Seed from --seed, then VOUCHER_SEED, then the given default."""
    if args.seed is not None:
        return args.seed
    return _env_int("VOUCHER_SEED", default)


def _out_dir(args):
    """Report directory from --out-dir, then VOUCHER_OUTPUT_DIR."""
    if args.out_dir is not None:
        return Path(args.out_dir)
    return Path(os.environ.get("VOUCHER_OUTPUT_DIR", settings.OUTPUT_DIR))


def _workers(args):
    """Worker count from --workers, then VOUCHER_WORKERS."""
    if args.workers is not None:
        return args.workers
    return _env_int("VOUCHER_WORKERS", settings.WORKERS)


def _scheme(args):
    """Stratification scheme named by --group-by."""
    if not args.group_by:
        return StratificationScheme()
    dimensions = tuple(d.strip() for d in args.group_by.split(",") if d.strip())
    return StratificationScheme(dimensions)


def _ingest(args):
    """Load voucher specs and the survey."""
    specs = load_voucher_specs(args.config)
    return specs, SurveyCollector(specs).ingest(args.survey)


def cmd_validate(args):
    """Check a survey file against the schema; list every bad row."""
    logger = logging.getLogger(__name__)
    specs = load_voucher_specs(args.config)
    try:
        ds = SurveyCollector(specs).ingest(args.survey)
    except SurveyValidationError as e:
        if e.header_problem:
            print(f"header: {e.header_problem}")
        for error in e.errors:
            print(error)
        print(f"{len(e.errors) or 1} errors")
        return EXIT_VALIDATION
    counts = ", ".join(f"{k.value}={n}" for k, n in ds.counts().items() if n)
    logger.info(f"Validated {args.survey}: {counts}")
    print(f"{len(ds)} records, 0 errors")
    return EXIT_OK


def cmd_estimate(args):
    """Point estimates, sample structure and bounds for every voucher and group."""
    logger = logging.getLogger(__name__)
    manifest = RunManifest.for_inputs(
        "estimate",
        {"survey": args.survey, "config": args.config},
        parameters={"group_by": args.group_by or "", "wave": args.wave},
    )
    specs, ds = _ingest(args)
    scheme = _scheme(args)
    waves = parse_waves(args.wave)
    estimator = EffectEstimator(specs, scheme, waves)
    writer = ReportWriter(_out_dir(args), args.format, manifest)

    writer.write_table("sample_structure", sample_structure(ds, scheme, waves), "Sample Structure")
    writer.write_table("estimates", estimator.estimate_table(ds), "Estimates")
    writer.write_table("bounds", pd.DataFrame(estimator.bound_rows(ds)), "Bias-Bounded Estimates")
    if not any(Wave.EXTRA in ds.waves_present(k) for k in ds.kinds_present()):
        logger.info("No extra-wave records: treatment intensity section omitted")
        print("notice: no extra-wave records, treatment intensity omitted")
    writer.write_manifest()
    return EXIT_OK


def cmd_bootstrap(args):
    """Stratified bootstrap confidence regions, interval charts and derived scenarios."""
    logger = logging.getLogger(__name__)
    seed = _seed(args)
    cfg = BootstrapConfig(
        replications=args.replications,
        alpha=args.alpha,
        seed=seed,
        scheme=_scheme(args),
        interval_mode=args.interval_mode,
        workers=_workers(args),
    )
    manifest = RunManifest.for_inputs(
        "bootstrap",
        {"survey": args.survey, "config": args.config, "scenarios": args.scenarios},
        seed=seed,
        alpha=cfg.alpha,
        replications=cfg.replications,
        parameters={"group_by": args.group_by or "", "wave": args.wave, "interval_mode": cfg.interval_mode},
    )
    specs, ds = _ingest(args)
    runner = StratifiedBootstrap(specs, cfg, parse_waves(args.wave))

    results, intensities = [], []
    for kind in ds.kinds_present():
        if not ds.of_kind(kind, runner.waves):
            logger.info(f"{kind.value}: no records in the selected waves, skipped")
            continue
        for metric in Metric:
            results.append(runner.run(ds, kind, metric))
        waves = ds.waves_present(kind)
        if Wave.ORIGINAL in waves and Wave.EXTRA in waves:
            intensities.append(runner.run_intensity(ds, kind))

    out_dir = _out_dir(args)
    writer = ReportWriter(out_dir, args.format, manifest)
    regions = pd.concat([r.to_frame() for r in results], ignore_index=True) if results else pd.DataFrame()
    writer.write_table("confidence_regions", regions, "Confidence Regions")
    if intensities:
        writer.write_table("intensity_intervals", _intensity_frame(intensities), "Treatment Intensity")

    data = plot_data(results)
    writer.write_table("plot_data", data, "Interval Plot Data")
    write_charts(data, out_dir, svg=args.svg)

    baseline = load_scenarios(args.scenarios)[0]
    originals = {kind: amount.original_amount for kind, amount in baseline.vouchers.items()}
    derived = scenarios_from_regions([region for r in results for region in r.regions], originals)
    write_scenarios([baseline] + derived, out_dir / "derived_scenarios.json")
    writer.write_manifest()
    return EXIT_OK


def _intensity_frame(intensities):
    """One row per voucher with its intensity interval."""
    rows = []
    for region in intensities:
        total = region.total_interval
        rows.append(
            {
                "voucher": region.voucher.value,
                "it": region.estimate.value,
                "it_ci_lo": region.interval.lo,
                "it_ci_hi": region.interval.hi,
                "total_ci_lo_millions": total.lo if total else None,
                "total_ci_hi_millions": total.hi if total else None,
                "n_original": region.estimate.n_original,
                "n_extra": region.estimate.n_extra,
            }
        )
    return pd.DataFrame(rows)


def cmd_impact(args):
    """GDP contributions, totals, multipliers and differences for each scenario."""
    manifest = RunManifest.for_inputs(
        "impact", {"table": args.table, "scenarios": args.scenarios, "config": args.config}
    )
    specs = load_voucher_specs(args.config)
    table = load_table(args.table)
    scenarios = load_scenarios(args.scenarios)
    manifest.scenarios = [s.label for s in scenarios]

    model = ImpactModel(table, specs)
    comparison = model.compare(scenarios).reset_index()
    writer = ReportWriter(_out_dir(args), args.format, manifest)
    writer.write_table("impact", comparison, "Economic Impact by Sector (NT$ millions)")
    demand = pd.concat(
        [demand_table(s).assign(scenario=s.label) for s in scenarios], ignore_index=True
    )
    writer.write_table("demand", demand, "Induced Demand by Voucher (NT$ millions)")
    multipliers = table.output_multipliers().rename_axis("sector").reset_index()
    writer.write_table("sector_multipliers", multipliers, "GDP per Unit of Final Demand")
    writer.write_manifest()

    totals = comparison.set_index("sector").loc[["total", "output_multiplier"]]
    for label in manifest.scenarios:
        print(f"{label}: total {totals.at['total', label]:.3f} NT$M, multiplier {totals.at['output_multiplier', label]:.3f}")
    return EXIT_OK


def cmd_simulate(args):
    """Synthetic survey plus ground-truth sidecar."""
    seed = _seed(args, default=None)
    manifest = RunManifest.for_inputs(
        "simulate", {"population": args.population, "config": args.config}, seed=seed
    )
    spec = load_population(args.population, seed=seed)
    manifest.seed = spec.seed
    out_dir = _out_dir(args)
    survey_path, truth_path = simulate(spec, out_dir, load_voucher_specs(args.config))
    ReportWriter(out_dir, "text", manifest).write_manifest()
    print(f"wrote {survey_path} and {truth_path}")
    return EXIT_OK


def build_parser():
    """Command line parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(description="Consumption voucher survey estimates and regional impact")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, survey=True):
        if survey:
            p.add_argument("survey", help="survey CSV file")
        p.add_argument("--config", default=str(settings.VOUCHER_CONFIG), help="voucher configuration JSON")
        p.add_argument("--out-dir", default=None, help="report directory (env VOUCHER_OUTPUT_DIR)")
        p.add_argument("--format", default="csv", choices=settings.REPORT_FORMATS)

    def grouping(p):
        p.add_argument("--group-by", default=None, help="comma-separated dimensions: gender,residence,age")
        p.add_argument("--wave", default="original", choices=["original", "all"])

    p = sub.add_parser("validate", help="check a survey file")
    p.add_argument("survey")
    p.add_argument("--config", default=str(settings.VOUCHER_CONFIG))
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("estimate", help="point estimates and bounds")
    common(p)
    grouping(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bootstrap", help="stratified bootstrap confidence regions")
    common(p)
    grouping(p)
    p.add_argument("--alpha", type=float, default=settings.ALPHA)
    p.add_argument("--replications", type=int, default=settings.REPLICATIONS)
    p.add_argument("--seed", type=int, default=None, help="env VOUCHER_SEED")
    p.add_argument("--workers", type=int, default=None, help="env VOUCHER_WORKERS")
    p.add_argument("--interval-mode", default="two_sided", choices=settings.INTERVAL_MODES)
    p.add_argument("--scenarios", default=str(settings.SCENARIO_FILE), help="baseline amounts for derived scenarios")
    p.add_argument("--svg", action="store_true", help="also export SVG charts (needs kaleido)")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("impact", help="input-output impact of demand scenarios")
    common(p, survey=False)
    p.add_argument("--table", default=str(settings.SECTOR_TABLE))
    p.add_argument("--scenarios", default=str(settings.SCENARIO_FILE))
    p.set_defaults(func=cmd_impact)

    p = sub.add_parser("simulate", help="synthetic survey with ground truth")
    common(p, survey=False)
    p.add_argument("--population", default=str(settings.POPULATION_FILE))
    p.add_argument("--seed", type=int, default=None, help="overrides the population seed (env VOUCHER_SEED)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    """Run a subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    logger = logging.getLogger(__name__)
    try:
        return args.func(args)
    except (SurveyValidationError, TableValidationError) as e:
        logger.error(f"Validation failed: {e}")
        return EXIT_VALIDATION
    except (ConfigurationError, OSError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (NumericalError, EstimationError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
