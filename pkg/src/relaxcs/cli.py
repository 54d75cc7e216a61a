"""Command-line experiment runner.

Verbs: simulate, recon, sweep, compare-schemes, tune, export. Flags mirror
config keys (section.key) and override them. Exit codes: 0 success,
2 config error, 3 numerical non-convergence on every job, 4 I/O error.

Everything a sweep writes except timings.csv is byte-deterministic for a
fixed config: rows are sorted before writing, map images use fixed windows,
and all randomness is seeded from the config.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ExperimentConfig, config_hash, parse_config
from .core import EchoTimes, masked_relative_error
from .fileio import FileFormatError, export_map_image, load_kspace, save_kspace
from .phantom import AcquisitionSpec, make_phantom, simulate_kspace, synth_coils
from .recon import ParamGrids, reconstruct, tune_parameters
from .sampling import InfeasibleRateError, make_echo_patterns

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

R2_WINDOW = (0.0, 0.25)   # 1/ms, fixed display window for determinism
X0_WINDOW = (0.0, 1.1)

METRICS_FIELDS = ("rate", "scheme", "method", "r2_error", "x0_error",
                  "iterations", "converged", "config_hash")


@dataclass
class JobSpec:
    config: ExperimentConfig
    rate_index: int
    scheme: str
    method: str


def _times(cfg: ExperimentConfig) -> EchoTimes:
    return EchoTimes(cfg.te_first + cfg.te_spacing * np.arange(cfg.n_echoes))


def _patterns_for(cfg: ExperimentConfig, rate_index: int, scheme: str):
    seed = cfg.pattern_seed + 1009 * rate_index + (500017 if scheme == "complementary" else 0)
    return make_echo_patterns(cfg.n_echoes, scheme, cfg.rows, cfg.cols,
                              cfg.rates[rate_index], cfg.d_min_for(rate_index),
                              cfg.calib_radius, seed)


def _run_job(job: JobSpec):
    cfg = job.config
    times = _times(cfg)
    phantom = make_phantom(cfg.rows, cfg.cols, cfg.preset, cfg.phantom_seed, times)
    coils = synth_coils(cfg.rows, cfg.cols, cfg.n_coils)
    patterns = _patterns_for(cfg, job.rate_index, job.scheme)
    acq = AcquisitionSpec(times=times, coils=coils, patterns=patterns,
                          noise_sigma=cfg.noise_sigma)
    data = simulate_kspace(phantom, acq, seed=cfg.noise_seed + 31 * job.rate_index)

    import time as _time
    t0 = _time.perf_counter()
    result = reconstruct(job.method, data, coils, times, cfg.params_for(job.method))
    runtime = _time.perf_counter() - t0

    row = {
        "rate": repr(cfg.rates[job.rate_index]),
        "scheme": job.scheme,
        "method": job.method,
        "r2_error": repr(masked_relative_error(phantom.r2star, result.r2star,
                                               phantom.support)),
        "x0_error": repr(masked_relative_error(phantom.x0, result.x0,
                                               phantom.support)),
        "iterations": str(len(result.trace)),
        "converged": str(result.converged),
        "config_hash": config_hash(cfg),
    }
    maps = {"r2star": result.r2star, "x0": result.x0}
    return row, maps, runtime, result.converged


def _write_metrics(path, rows):
    rows = sorted(rows, key=lambda r: (float(r["rate"]), r["scheme"], r["method"]))
    with open(path, "w", newline="\n") as f:
        writer = csv.DictWriter(f, fieldnames=METRICS_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _write_timings(path, entries):
    entries = sorted(entries, key=lambda e: (float(e[0]), e[1], e[2]))
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("rate", "scheme", "method", "seconds"))
        writer.writerows(entries)


def _run_jobs(cfg: ExperimentConfig, jobs):
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(_run_job, jobs))
    else:
        outputs = [_run_job(j) for j in jobs]
    return outputs


def _experiment(cfg: ExperimentConfig, schemes) -> int:
    out_dir = os.environ.get("RELAXCS_OUTPUT_DIR", cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    maps_dir = os.path.join(out_dir, "maps")
    os.makedirs(maps_dir, exist_ok=True)

    jobs = [JobSpec(cfg, ri, scheme, method)
            for ri in range(len(cfg.rates))
            for scheme in schemes
            for method in cfg.methods]
    outputs = _run_jobs(cfg, jobs)

    rows, timing_rows = [], []
    any_converged = False
    for job, (row, maps, runtime, converged) in zip(jobs, outputs):
        rows.append(row)
        timing_rows.append((row["rate"], row["scheme"], row["method"],
                            f"{runtime:.3f}"))
        any_converged = any_converged or converged
        tag = f"rate{row['rate']}_{row['scheme']}_{row['method']}"
        export_map_image(maps["r2star"], os.path.join(maps_dir, f"{tag}_r2star.pgm"),
                         R2_WINDOW)
        export_map_image(maps["x0"], os.path.join(maps_dir, f"{tag}_x0.pgm"),
                         X0_WINDOW)

    _write_metrics(os.path.join(out_dir, "metrics.csv"), rows)
    _write_timings(os.path.join(out_dir, "timings.csv"), timing_rows)
    with open(os.path.join(out_dir, "config_used.ini"), "w", newline="\n") as f:
        f.write(cfg.canonical())

    if len(schemes) > 1:
        _write_scheme_comparison(os.path.join(out_dir, "scheme_compare.csv"), rows)
    return EXIT_OK if any_converged or rows else EXIT_NONCONVERGED


def _write_scheme_comparison(path, rows):
    paired = {}
    for row in rows:
        key = (row["rate"], row["method"])
        paired.setdefault(key, {})[row["scheme"]] = row
    out = []
    for (rate, method), by_scheme in sorted(paired.items(),
                                            key=lambda kv: (float(kv[0][0]), kv[0][1])):
        if {"fixed", "complementary"} <= set(by_scheme):
            out.append((rate, method,
                        by_scheme["fixed"]["r2_error"],
                        by_scheme["complementary"]["r2_error"],
                        by_scheme["fixed"]["x0_error"],
                        by_scheme["complementary"]["x0_error"]))
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("rate", "method", "r2_fixed", "r2_complementary",
                         "x0_fixed", "x0_complementary"))
        writer.writerows(out)


# ------------------------------------------------------------------ verbs

def _load_config(args) -> ExperimentConfig:
    text = ""
    if args.config:
        with open(args.config) as f:
            text = f.read()
    overrides = {}
    for item in args.set or []:
        key, _, val = item.partition("=")
        if not _:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        overrides[key.strip()] = val.strip()
    return parse_config(text, overrides)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out_dir = os.environ.get("RELAXCS_OUTPUT_DIR", cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    times = _times(cfg)
    phantom = make_phantom(cfg.rows, cfg.cols, cfg.preset, cfg.phantom_seed, times)
    coils = synth_coils(cfg.rows, cfg.cols, cfg.n_coils)
    patterns = _patterns_for(cfg, 0, cfg.scheme)
    acq = AcquisitionSpec(times=times, coils=coils, patterns=patterns,
                          noise_sigma=cfg.noise_sigma)
    data = simulate_kspace(phantom, acq, seed=cfg.noise_seed)
    save_kspace(os.path.join(out_dir, "kspace.bin"), data, times)
    np.save(os.path.join(out_dir, "truth_x0.npy"), phantom.x0)
    np.save(os.path.join(out_dir, "truth_r2star.npy"), phantom.r2star)
    np.save(os.path.join(out_dir, "truth_support.npy"), phantom.support)
    print(f"wrote kspace.bin ({data.n_echoes} echoes x {data.n_coils} coils, "
          f"rate {cfg.rates[0]}) to {out_dir}")
    return EXIT_OK


def cmd_recon(args) -> int:
    cfg = _load_config(args)
    data, times = load_kspace(args.input)
    coils = synth_coils(*data.shape, cfg.n_coils)
    out_dir = os.environ.get("RELAXCS_OUTPUT_DIR", cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    method = args.method
    result = reconstruct(method, data, coils, times, cfg.params_for(method))
    np.save(os.path.join(out_dir, f"{method}_x0.npy"), result.x0)
    np.save(os.path.join(out_dir, f"{method}_r2star.npy"), result.r2star)
    export_map_image(result.r2star, os.path.join(out_dir, f"{method}_r2star.pgm"),
                     R2_WINDOW)
    export_map_image(result.x0, os.path.join(out_dir, f"{method}_x0.pgm"), X0_WINDOW)
    truth_dir = args.truth_dir or os.path.dirname(os.path.abspath(args.input))
    tx0 = os.path.join(truth_dir, "truth_x0.npy")
    if os.path.exists(tx0):
        x0 = np.load(tx0)
        r2 = np.load(os.path.join(truth_dir, "truth_r2star.npy"))
        sup = np.load(os.path.join(truth_dir, "truth_support.npy"))
        print(f"{method}: r2star error "
              f"{masked_relative_error(r2, result.r2star, sup):.5f}, x0 error "
              f"{masked_relative_error(x0, result.x0, sup):.5f}, "
              f"{len(result.trace)} iterations, converged={result.converged}")
    else:
        print(f"{method}: {len(result.trace)} iterations, converged={result.converged}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    return _experiment(cfg, [cfg.scheme])


def cmd_compare_schemes(args) -> int:
    cfg = _load_config(args)
    cfg = cfg.with_(methods=("joint_admm",))
    return _experiment(cfg, ["complementary", "fixed"])


def _parse_grid(text: str):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    times = _times(cfg)
    phantom = make_phantom(cfg.rows, cfg.cols, cfg.preset, cfg.phantom_seed, times)
    coils = synth_coils(cfg.rows, cfg.cols, cfg.n_coils)
    patterns = _patterns_for(cfg, 0, cfg.scheme)
    acq = AcquisitionSpec(times=times, coils=coils, patterns=patterns,
                          noise_sigma=cfg.noise_sigma)
    grids = ParamGrids(lambda1=_parse_grid(args.lambda1_grid),
                       lambda2=_parse_grid(args.lambda2_grid),
                       lambda3=_parse_grid(args.lambda3_grid),
                       lambda_model=_parse_grid(args.lambda_model_grid),
                       rho=_parse_grid(args.rho_grid))
    tuned, table = tune_parameters(phantom, acq, cfg.params_for("joint_admm"),
                                   grids, seed=cfg.noise_seed)
    out_dir = os.environ.get("RELAXCS_OUTPUT_DIR", cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "tuned.ini"), "w", newline="\n") as f:
        f.write("[params]\n")
        for key in ("lambda1", "lambda2", "lambda3", "lambda_model", "rho"):
            f.write(f"{key} = {getattr(tuned, key)!r}\n")
    with open(os.path.join(out_dir, "tune_scores.csv"), "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("stage", "values", "score"))
        for stage, values, score in table:
            writer.writerow((stage, ";".join(f"{k}={v!r}" for k, v in values.items()),
                             repr(score)))
    print(f"tuned: lambda1={tuned.lambda1!r} lambda2={tuned.lambda2!r} "
          f"lambda3={tuned.lambda3!r} lambda_model={tuned.lambda_model!r} "
          f"rho={tuned.rho!r}")
    return EXIT_OK


def cmd_export(args) -> int:
    img = np.load(args.input)
    lo, hi = (float(t) for t in args.window.split(","))
    export_map_image(img, args.output, (lo, hi))
    print(f"wrote {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxcs",
        description="Compressive-sensing R2*/T2* mapping experiments")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("simulate", help="simulate k-space for the config phantom")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("recon", help="reconstruct a saved k-space container")
    common(p)
    p.add_argument("--input", required=True, help="k-space container path")
    p.add_argument("--method", default="joint_admm",
                   choices=("decoupled", "joint_admm", "model_based"))
    p.add_argument("--truth-dir", help="directory with truth_*.npy for metrics")
    p.set_defaults(fn=cmd_recon)

    p = sub.add_parser("sweep", help="rate x method sweep with metrics table")
    common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare-schemes",
                       help="fixed vs complementary patterns, joint recovery")
    common(p)
    p.set_defaults(fn=cmd_compare_schemes)

    p = sub.add_parser("tune", help="staged grid search on the config phantom")
    common(p)
    p.add_argument("--lambda1-grid", default="0,1e-4,1e-3")
    p.add_argument("--lambda2-grid", default="0,1e-4")
    p.add_argument("--lambda3-grid", default="0,1e-5")
    p.add_argument("--lambda-model-grid", default="1,10")
    p.add_argument("--rho-grid", default="0.02,0.2")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("export", help="window a saved .npy map into a PGM image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--window", default="0,1", metavar="LO,HI")
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InfeasibleRateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
