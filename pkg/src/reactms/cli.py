"""Command-line entry point: ``reactms <subcommand> --config scenario.toml``.

Subcommands write CSV data and a JSON report into ``--out``.  Exit codes:
0 success, 2 usage, 3 configuration error, 4 numerical failure,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .coefficients import PAIRS, CoefficientCache, coefficient_set
from .config import ScenarioConfig, parse_config
from .errors import ConfigError, DomainError, IntegrationError, NumericalError, ReactMSError, SingularCoefficientError
from .solver import (
    Grid1D,
    MixtureState,
    diffuse_1d,
    energy_density,
    equilibrium_residual,
    relax_0d,
)
from .verify import run_verify

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4
EXIT_VERIFY = 5

log = logging.getLogger("reactms")

COEFFICIENT_COLUMNS = ["T", "A_fwd_prefactor", "A_bwd_prefactor"] + [f"D_{i + 1}{j + 1}" for i, j in PAIRS]
SERIES_COLUMNS = ["t", "cell_index", "n1", "n2", "n3", "n4", "T", "J1", "J2", "J3", "J4", "A"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_coefficients(cfg: ScenarioConfig, out: Path) -> dict:
    reaction, kernel = cfg.reaction(), cfg.kernel_spec()
    rows = []
    for T in cfg.coefficients.temperatures:
        cs = coefficient_set(reaction, kernel, T)
        rows.append([T, cs.A_forward_prefactor, cs.A_backward_prefactor] + [cs.D[i, j] for i, j in PAIRS])
    _write_csv(out / "coefficients.csv", COEFFICIENT_COLUMNS, rows)
    return {"rows": len(rows)}


def _series_rows(traj, reaction):
    for t, state, A in zip(traj.times, traj.states, traj.production):
        # Face fluxes averaged onto cells.
        Jc = 0.5 * (state.J[1:] + state.J[:-1])
        for c in range(state.cells):
            yield [t, c, *state.n[c], state.T[c], *Jc[c], float(np.atleast_1d(A)[c])]


def _summary(traj, reaction) -> dict:
    first, last = traj.states[0], traj.states[-1]
    e0 = float(np.sum(energy_density(reaction, first.n, first.T)))
    drift = np.abs(last.partial_totals() - first.partial_totals()) / first.partial_totals()
    return {
        "steps": traj.steps,
        "t_end": traj.times[-1],
        "conservation_drift": dict(zip(("n1+n3", "n1+n4", "n2+n3"), map(float, drift))),
        "equilibrium_residual": float(np.max(equilibrium_residual(reaction, last.n, last.T))),
        "max_energy_defect": traj.max_energy_defect,
        "max_projection_norm": traj.max_projection,
        "max_flux_residual": traj.max_flux_residual,
        "initial_energy": e0,
    }


def run_relax0d(cfg: ScenarioConfig, out: Path) -> dict:
    reaction, kernel = cfg.reaction(), cfg.kernel_spec()
    cache = CoefficientCache(reaction, kernel)
    n0, T0 = cfg.initial_profiles(1)
    traj = relax_0d(
        reaction,
        cache,
        n0[0],
        float(T0[0]),
        cfg.time.t_end,
        cfg.time.dt or None,
        cfg.time.integrator == "implicit",
        cfg.time.output_every,
    )
    _write_csv(out / "relax0d.csv", SERIES_COLUMNS, _series_rows(traj, reaction))
    summary = _summary(traj, reaction)
    _write_json(out / "relax0d_summary.json", summary)
    return summary


def run_diffuse1d(cfg: ScenarioConfig, out: Path) -> dict:
    reaction, kernel = cfg.reaction(), cfg.kernel_spec()
    cache = CoefficientCache(reaction, kernel)
    n, T = cfg.initial_profiles()
    grid = Grid1D(cfg.grid.cells, cfg.grid.length / cfg.grid.cells)
    traj = diffuse_1d(
        reaction,
        cache,
        MixtureState(n, T),
        grid,
        cfg.time.t_end,
        cfg.time.dt or None,
        cfg.diffusion.closure,
        cfg.time.integrator == "implicit",
        cfg.time.output_every,
        cfg.diffusion.safety,
    )
    _write_csv(out / "diffuse1d.csv", SERIES_COLUMNS, _series_rows(traj, reaction))
    summary = _summary(traj, reaction)
    summary["closure"] = cfg.diffusion.closure
    _write_json(out / "diffuse1d_summary.json", summary)
    return summary


def _verify(cfg: ScenarioConfig, out: Path, threads: int | None) -> dict:
    report = run_verify(cfg, threads=threads)
    (out / "verify_report.json").write_text(report.to_json())
    for check in report.checks:
        log.info("%-10s %s", check.status.upper(), check.name)
    return {"ok": report.ok}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reactms", description="Reactive Maxwell-Stefan mixtures: coefficients, runs and checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("coefficients", "tabulate A prefactors and diffusion coefficients over temperatures"),
        ("relax0d", "space-homogeneous chemical relaxation"),
        ("diffuse1d", "1D reaction-diffusion run with zero-flux walls"),
        ("verify", "run the invariant and Monte Carlo suite"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="scenario TOML file")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: [output] dir)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = time.perf_counter()
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = args.out if args.out is not None else Path(cfg.base_dir) / cfg.output.dir
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "coefficients":
            result = run_coefficients(cfg, out)
        elif args.command == "relax0d":
            result = run_relax0d(cfg, out)
        elif args.command == "diffuse1d":
            result = run_diffuse1d(cfg, out)
        else:
            result = _verify(cfg, out, args.threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, IntegrationError, SingularCoefficientError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ReactMSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_json(out / f"{args.command}_timing.json", {"wall_clock_seconds": time.perf_counter() - started})
    if args.command == "verify" and not result["ok"]:
        print("verification failed; see verify_report.json", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
