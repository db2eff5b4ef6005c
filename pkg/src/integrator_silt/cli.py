"""Command-line experiment runner.

Subcommands: verify, convergence, fwt, sample.  Every experiment is described
by a config file; outputs land in one directory per run, named by the config
hash.  Exit codes: 0 success, 1 config error, 2 numerical-suite failure,
3 internal error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigError, SiltError
from .fwt import lemma2_weak_convergence_scan, lemma3_ratio_scan, regularized_fwt_quadrature, theorem3_integral
from .grid import GridContext, GridFunction
from .operators import build_operator, kernel_indicators
from .process import sample_paths
from .reports import run_metadata, write_csv, write_json
from .silt import cauchy_diagnostic
from .suites import run_all_suites

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SUITE = 2
EXIT_INTERNAL = 3

_SCAN_RADII = (0.2, 0.1, 0.05)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="integrator-silt", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the YAML experiment config")
    common.add_argument("--out", default=None, help="override the output base directory")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (falls back to INTEGRATOR_SILT_THREADS, then the config)")
    common.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the lemma property suites and kernel audits")
    sub.add_parser("convergence", parents=[common], help="refinement tables and the smoothing-ladder diagnostic")
    sub.add_parser("fwt", parents=[common], help="transform quadratures per probe and mode")
    sub.add_parser("sample", parents=[common], help="export sampled paths as CSV")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    threads = args.threads
    if threads is None:
        env = os.environ.get("INTEGRATOR_SILT_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError("INTEGRATOR_SILT_THREADS", f"not an integer: {env!r}") from exc
    return config.with_overrides(
        seed=args.seed_override,
        threads=threads,
        output_dir=args.out,
        figures=False if args.no_figures else None,
    )


def _run_dir(config: ExperimentConfig) -> str:
    path = os.path.join(config.output_dir, config.hash())
    os.makedirs(path, exist_ok=True)
    save_config(config, os.path.join(path, "config.yaml"))
    return path


def run_verify(config: ExperimentConfig) -> int:
    outdir = _run_dir(config)
    ctx = GridContext(config.grid_n)
    op = build_operator(config.operator, ctx)
    results = run_all_suites(op, seed=config.seed)
    report = {
        "metadata": run_metadata(config),
        "suites": results,
        "passed": all(r["passed"] for r in results),
    }

    indicators = kernel_indicators(op)
    scans = {}
    if indicators:
        t0 = indicators[0]
        ratios = lemma3_ratio_scan(op, t0, _SCAN_RADII)
        scans["kernel_ratio_scan"] = {
            "center": list(t0),
            "radii": list(_SCAN_RADII),
            "min_ratio": [r[0] for r in ratios],
            "max_ratio": [r[1] for r in ratios],
        }
        ones = GridFunction.ones(ctx)
        t0w = t0 if t0[0] < t0[1] else (0.25, 0.75)
        weak = lemma2_weak_convergence_scan(ones, t0w, _SCAN_RADII)
        scans["weak_convergence_scan"] = {
            "center": list(t0w),
            "radii": list(_SCAN_RADII),
            "max_projection_sq": weak,
        }
    report["scans"] = scans

    write_json(os.path.join(outdir, "verify.json"), report)
    write_csv(
        os.path.join(outdir, "verify_summary.csv"),
        ["suite", "passed", "detail"],
        [[r["name"], r["passed"], "; ".join(f"{k}={v}" for k, v in r.items() if k not in ("name", "passed"))]
         for r in results],
    )
    if config.figures and scans:
        from . import plots

        if "kernel_ratio_scan" in scans:
            s = scans["kernel_ratio_scan"]
            plots.scan_plot(
                s["radii"],
                {"min ratio": s["min_ratio"], "max ratio": s["max_ratio"]},
                os.path.join(outdir, "kernel_ratio_scan.png"),
                title="kernel-indicator norm-ratio scan",
                ylabel="norm ratio",
            )
        if "weak_convergence_scan" in scans:
            s = scans["weak_convergence_scan"]
            plots.scan_plot(
                s["radii"],
                {"max squared pairing": s["max_projection_sq"]},
                os.path.join(outdir, "weak_convergence_scan.png"),
                title="normalized indicator-difference pairing",
                ylabel="squared pairing",
            )
    print(f"verify: {'pass' if report['passed'] else 'FAIL'} ({len(results)} suites) -> {outdir}")
    return EXIT_OK if report["passed"] else EXIT_SUITE


def run_convergence(config: ExperimentConfig) -> int:
    outdir = _run_dir(config)
    ctx = GridContext(config.grid_n)
    op = build_operator(config.operator, ctx)

    report = theorem3_integral(op, config.k, config.delta)
    closed_form = None
    if config.operator.kind == "identity" and config.k == 2:
        d_eff = report.metadata["delta_effective"]
        closed_form = -math.log(d_eff) - (1.0 - d_eff)
    rows = []
    for mesh, value in report.levels:
        row = [mesh, value]
        if closed_form is not None:
            row += [closed_form, abs(value - closed_form) / abs(closed_form)]
        rows.append(row)
    header = ["mesh", "value"] + (["closed_form", "rel_error"] if closed_form is not None else [])
    write_csv(os.path.join(outdir, "theorem3_levels.csv"), header, rows)
    write_json(os.path.join(outdir, "theorem3.json"),
               {"metadata": run_metadata(config), "report": report.to_dict(), "closed_form": closed_form})

    table = cauchy_diagnostic(op, config.eps_ladder, config.k, config.delta)
    moment_rows = []
    L = len(table.epsilons)
    for i in range(L):
        for j in range(i, L):
            inc = table.cauchy_increments[i] if j == i + 1 else None
            moment_rows.append([table.epsilons[i], table.epsilons[j], table.cross_moments[i][j], inc])
    write_csv(os.path.join(outdir, "moment_table.csv"),
              ["eps1", "eps2", "moment", "cauchy_increment"], moment_rows)
    write_json(os.path.join(outdir, "moments.json"),
               {"metadata": run_metadata(config), "table": table.to_dict()})

    if config.figures:
        from . import plots

        plots.refinement_plot(report.levels, os.path.join(outdir, "theorem3_refinement.png"),
                              closed_form=closed_form, title="Gram-reciprocal quadrature refinement")
        plots.cauchy_plot(table, os.path.join(outdir, "cauchy_ladder.png"))
    print(f"convergence: theorem3={report.value:.6g} "
          f"cauchy_increments={[format(x, '.3g') for x in table.cauchy_increments]} -> {outdir}")
    return EXIT_OK


def run_fwt(config: ExperimentConfig) -> int:
    outdir = _run_dir(config)
    ctx = GridContext(config.grid_n)
    op = build_operator(config.operator, ctx)
    modes = config.resolved_fwt_modes()
    tasks = [(probe, mode) for probe in config.probes for mode in modes]

    def _one(task):
        probe, mode = task
        h = probe.build(ctx)
        return regularized_fwt_quadrature(op, config.k, h, mode, delta=config.delta)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            reports = list(pool.map(_one, tasks))
    else:
        reports = [_one(t) for t in tasks]

    rows = []
    docs = {}
    for (probe, mode), rep in zip(tasks, reports):
        label = probe.describe()
        rep.metadata["probe"] = label
        rows.append([label, mode, rep.metadata["convention"], rep.value, rep.error_estimate,
                     rep.singular_hits, rep.singular_weight])
        docs[f"{label}|{mode}"] = rep.to_dict()
    write_csv(os.path.join(outdir, "fwt_summary.csv"),
              ["probe", "mode", "convention", "value", "error_estimate", "singular_hits", "singular_weight"],
              rows)
    write_json(os.path.join(outdir, "fwt.json"), {"metadata": run_metadata(config), "reports": docs})
    if config.figures:
        from . import plots

        plots.fwt_summary_plot([(r[0], r[1], r[3]) for r in rows], os.path.join(outdir, "fwt_summary.png"))
    print(f"fwt: {len(rows)} quadratures -> {outdir}")
    return EXIT_OK


def run_sample(config: ExperimentConfig) -> int:
    outdir = _run_dir(config)
    ctx = GridContext(config.grid_n)
    op = build_operator(config.operator, ctx)
    samples = sample_paths(op, config.seed, config.paths)
    nodes = ctx.nodes

    def rows():
        for p in samples:
            for j in range(ctx.n + 1):
                yield [p.index, j, nodes[j], p.coord1[j], p.coord2[j]]

    write_csv(os.path.join(outdir, "paths.csv"), ["path_id", "node_index", "t", "x1", "x2"], rows())
    write_json(os.path.join(outdir, "sample.json"),
               {"metadata": run_metadata(config), "paths": config.paths, "nodes": ctx.n + 1})
    if config.figures:
        from . import plots

        plots.paths_plot(samples, os.path.join(outdir, "paths.png"))
    print(f"sample: {config.paths} paths on {ctx.n + 1} nodes -> {outdir}")
    return EXIT_OK


_RUNNERS = {
    "verify": run_verify,
    "convergence": run_convergence,
    "fwt": run_fwt,
    "sample": run_sample,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _RUNNERS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SiltError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
