"""``hpsense`` command line: map | toy | exclude | speedup | project | leakage | validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..leakage import leakage_estimate
from ..protocol import mapping_grid, psuccess_ideal, ptilde_ideal
from ..stats import (BracketingError, FrequencyGrid, ScanSetup, combined_llr,
                     combined_responses, exclusion_scan, fit_background, fit_signal,
                     generate_toy, llr_test, multiqubit_scaling, null_statistics,
                     shots_per_year)
from ..stats.fitting import LineSearchSpace
from ..validation import circuit_formula_check, leakage_check, trotter_check, wilks_check
from .config import ConfigError, RunConfig, load_config
from .records import Manifest

log = logging.getLogger("hpsense")

EXIT_OK, EXIT_CONFIG, EXIT_BRACKET = 0, 2, 3


class Run:
    """Output directory, thread pool and bookkeeping for one invocation."""

    def __init__(self, command: str, config: RunConfig, out_dir: Path, threads: int):
        self.command = command
        self.config = config
        self.out_dir = out_dir
        self.threads = threads
        self.outputs: list[str] = []
        self.pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out_dir / name

    def write_csv(self, name: str, rows: list[dict]) -> None:
        if not rows:
            raise ValueError(f"no rows for {name}")
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)

    def write_json(self, name: str, doc) -> None:
        self.path(name).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_map(run: Run) -> int:
    cfg = run.config
    freqs = np.asarray(cfg.map.frequencies_ghz or cfg.grid.bin_centers, dtype=float)
    f, pe = np.meshgrid(freqs, np.asarray(cfg.map.p_e_values), indexing="ij")
    f, pe = f.ravel(), pe.ravel()
    chunks = np.array_split(np.arange(len(f)), max(1, min(run.threads, len(f))))
    work = lambda idx: mapping_grid(f[idx], pe[idx], cfg.profile)
    parts = list(run.pool.map(work, chunks)) if run.pool else [work(c) for c in chunks]
    out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    beta = cfg.profile.beta
    rows = [{"f_ghz": float(a), "p_e": float(b), "p_base_obs": float(c), "p_tilde_obs": float(d),
             "p_success_obs": float(e), "one_minus_p_tilde": float(1 - d),
             "p_tilde_ideal": float(ptilde_ideal(b, beta)),
             "p_success_ideal": float(psuccess_ideal(b, beta))}
            for a, b, c, d, e in zip(f, pe, out["p_base"], out["p_tilde"], out["p_success"])]
    run.write_csv("map.csv", rows)
    return EXIT_OK


def _search(cfg: RunConfig) -> LineSearchSpace:
    return LineSearchSpace(center=cfg.physics.dm_mass_ghz, window_bins=cfg.window_bins)


def cmd_toy(run: Run) -> int:
    cfg = run.config
    search = _search(cfg)
    resp = combined_responses(cfg.profile, cfg.physics.dm_mass_ghz, cfg.shots)
    n_toys = 1 if cfg.asimov else cfg.n_toys

    def one(i):
        toy = generate_toy(cfg.physics, cfg.profile, cfg.grid, cfg.shots, cfg.seed,
                           base_shots=cfg.baseline_shots, toy_index=i, asimov=cfg.asimov)
        recs = []
        for name in ("base", "enh"):
            counts = toy.histogram(name)
            h0 = fit_background(counts, cfg.grid)
            q, p = llr_test(h0, fit_signal(counts, cfg.grid, search=search, background=h0))
            recs.append({"toy_index": i, "histogram": name, "q": q, "p_value": p})
        q, p = combined_llr(toy.enh_counts, toy.success_counts, cfg.grid,
                            mode=cfg.combined_mode, responses=resp, search=search)
        recs.append({"toy_index": i, "histogram": f"combined_{cfg.combined_mode}", "q": q,
                     "p_value": p})
        return toy, recs

    results = list(run.pool.map(one, range(n_toys))) if run.pool else [one(i) for i in range(n_toys)]
    results[0][0].write_csv(run.path("toy_000.csv"))
    run.write_json("toys.json", [t.to_json() for t, _ in results])
    run.write_csv("toy_fits.csv", [r for _, recs in results for r in recs])
    return EXIT_OK


def _setup(cfg: RunConfig, run: Run, **overrides) -> ScanSetup:
    kw = dict(physics=cfg.physics, profile=cfg.profile, grid=cfg.grid, shots=cfg.shots,
              mode=cfg.mode, n_toys=cfg.n_toys, seed=cfg.seed, asimov=cfg.asimov,
              combined_mode=cfg.combined_mode, window_bins=cfg.window_bins, executor=run.pool)
    kw.update(overrides)
    return ScanSetup(**kw)


def cmd_exclude(run: Run) -> int:
    cfg = run.config
    shots = cfg.baseline_shots if cfg.mode == "base" else cfg.shots
    try:
        res = exclusion_scan(_setup(cfg, run, shots=shots))
    except BracketingError as exc:
        log.error("%s", exc)
        run.write_json("exclusion.json", {"error": str(exc)})
        return EXIT_BRACKET
    res.write_csv(run.path("pvalue_curve.csv"))
    run.write_json("exclusion.json", res.to_json())
    return EXIT_OK


def cmd_speedup(run: Run) -> int:
    cfg = run.config
    enh_mode = "enh" if cfg.mode == "base" else cfg.mode
    rows = []
    for r in cfg.speedup.r_values:
        for p in cfg.speedup.p_values:
            prof = cfg.profile.model_copy(update={"readout_error": r, "prep_error": p})
            cell = {"r": r, "p": p, "eps_base_95": None, "eps_enh_95": None, "speedup": None,
                    "error": None}
            try:
                base = exclusion_scan(_setup(cfg, run, profile=prof, mode="base",
                                             shots=cfg.shots * cfg.speedup.base_shot_factor))
                enh = exclusion_scan(_setup(cfg, run, profile=prof, mode=enh_mode))
                cell.update(eps_base_95=base.epsilon_95, eps_enh_95=enh.epsilon_95,
                            speedup=(base.epsilon_95 / enh.epsilon_95) ** 4)
            except BracketingError as exc:
                cell["error"] = str(exc)
            log.info("speedup cell r=%g p=%g -> %s", r, p, cell["speedup"])
            rows.append(cell)
    run.write_csv("speedup.csv", rows)
    run.write_json("speedup.json", rows)
    return EXIT_OK


def projection_point(cfg: RunConfig, years: float, mass: float, run: Run | None = None) -> dict:
    """Projected limit at one mass; scans run on a local grid around ``mass``.

    Every qubit of a band sees each probe frequency ``shots`` times, so the
    baseline reference is ``qubits_per_band`` plain qubits. The per-pair
    speedup comes from ``2 * shots`` baseline against ``shots`` enhanced.
    """
    spec = cfg.project
    step_mhz = spec.step_khz * 1e-3
    half = spec.half_width_bins * step_mhz * 1e-3
    grid = FrequencyGrid(f_min=round(mass - half, 9), f_max=round(mass + half, 9),
                         step_mhz=step_mhz)
    shots = int(round(years * shots_per_year(cfg.profile.tau_us, spec.overhead_us, spec.band_mhz,
                                             spec.step_khz, spec.qubits_per_band)))
    n = spec.qubits_per_band
    physics = cfg.physics.model_copy(update={"dm_mass_ghz": mass})
    pool = run.pool if run is not None else None
    common = dict(physics=physics, profile=cfg.profile, grid=grid, n_toys=cfg.n_toys,
                  seed=cfg.seed, asimov=cfg.asimov, combined_mode=cfg.combined_mode,
                  window_bins=cfg.window_bins, executor=pool)
    band = exclusion_scan(ScanSetup(mode="base", shots=n * shots, **common))
    pair_base = exclusion_scan(ScanSetup(mode="base", shots=2 * shots, **common),
                               start=band.epsilon_95)
    enh_mode = "enh" if cfg.mode == "base" else cfg.mode
    pair_enh = exclusion_scan(ScanSetup(mode=enh_mode, shots=shots, **common),
                              start=band.epsilon_95)
    g = (pair_base.epsilon_95 / pair_enh.epsilon_95) ** 4
    g_eff = 2 * g if spec.many_qubit_limit else multiqubit_scaling(g, n)
    return {"years": years, "m_x_ghz": mass, "shots": float(shots),
            "eps_base_95": band.epsilon_95, "eps_enh_95": pair_enh.epsilon_95, "speedup": g,
            "effective_speedup": g_eff, "eps_projected_95": band.epsilon_95 / g_eff ** 0.25}


def cmd_project(run: Run) -> int:
    cfg = run.config
    rows = [projection_point(cfg, y, m, run) for y in cfg.project.years
            for m in cfg.project.masses()]
    run.write_csv("projection.csv", rows)
    bands = [{"band": i, "f_lo_ghz": a, "f_hi_ghz": b, "qubits": cfg.project.qubits_per_band}
             for i, (a, b) in enumerate(cfg.project.band_edges())]
    run.write_csv("bands.csv", bands)
    return EXIT_OK


def cmd_leakage(run: Run) -> int:
    spec = run.config.leakage
    alpha = 2 * math.pi * spec.anharmonicity_mhz
    rows = [{"ratio": r, "drive_rad_per_us": r * alpha,
             "max_leakage": leakage_estimate(alpha, r * alpha, spec.f_q_ghz)} for r in spec.ratios]
    run.write_csv("leakage.csv", rows)
    return EXIT_OK


def cmd_validate(run: Run) -> int:
    cfg = run.config
    spec = cfg.validate_
    times = cfg.profile.coherence(spec.f_q_ghz)
    checks = [trotter_check(times, spec.rabi_period_us, cfg.profile.trotter_steps,
                            spec.trotter_tolerance, spec.curve_points),
              circuit_formula_check()]
    if spec.wilks_toys > 0:
        qs = null_statistics(cfg.profile, spec.wilks_grid, spec.wilks_shots, spec.wilks_toys,
                             cfg.seed, histogram=spec.wilks_mode, window_bins=cfg.window_bins,
                             executor=run.pool)
        checks.append(wilks_check(qs))
    alpha = 2 * math.pi * cfg.leakage.anharmonicity_mhz
    checks.append(leakage_check(alpha, cfg.leakage.f_q_ghz, [1e-6, 1e-5, 1e-4]))
    for c in checks:
        log.info("%-22s %s measured=%s", c.name, "PASS" if c.passed else "FAIL", c.measured)
    run.write_json("validation.json", {"checks": [c.as_record() for c in checks]})
    return EXIT_OK


COMMANDS = {"map": cmd_map, "toy": cmd_toy, "exclude": cmd_exclude, "speedup": cmd_speedup,
            "project": cmd_project, "leakage": cmd_leakage, "validate": cmd_validate}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpsense", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config or a previous run manifest")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--asimov", action="store_true", help="use expected counts")
    common.add_argument("--mode", choices=["base", "enh", "combined"])
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.asimov:
        update["asimov"] = True
    if args.mode is not None:
        update["mode"] = args.mode
    if args.out is not None:
        update["output_dir"] = str(args.out)
    if not update:
        return cfg
    return RunConfig.model_validate({**cfg.dump(), **update})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args.command, cfg, Path(cfg.output_dir), args.threads)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](run)
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 1
    finally:
        run.close()
    manifest = Manifest(command=args.command, argv=argv, version=__version__, seed=cfg.seed,
                        threads=args.threads, config=cfg.dump(), config_sha256=cfg.digest(),
                        started_utc=started, wall_time_s=time.perf_counter() - t0,
                        exit_code=code, outputs=list(run.outputs))
    run.write_json("manifest.json", manifest.model_dump())
    return code


if __name__ == "__main__":
    sys.exit(main())
