"""Command-line front end: optimize, sweep, check.

Every command that is given --out writes manifest.json there, including on
failure. Log verbosity follows the FRONTHAUL_CRB_LOG environment variable
(DEBUG, INFO, WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import UnlocalizableError
from .evaluation import EvalConfig, sweep_capacity
from .inner import RobustProblem, SolverOptions
from .scenario import (
    ScenarioError,
    bundled_scenario_path,
    covering_gap,
    load_scenario,
    scenario_checks,
    scenario_from_dict,
)
from .solver import baseline_white_design, charnes_cooper_forward, solve_robust
from .spectra import write_spectrum_csv

log = logging.getLogger("fronthaul_crb")

LOG_ENV = "FRONTHAUL_CRB_LOG"


@dataclass
class RunManifest:
    command: str
    scenario_path: str
    scenario_sha256: str
    options: dict[str, Any]
    seed: int | None
    tool_version: str = __version__
    python: str = field(default_factory=platform.python_version)
    duration_s: float = 0.0
    status: str = "running"
    error: str | None = None
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if not path.exists() and not path.suffix:
        bundled = bundled_scenario_path(arg)
        if bundled.exists():
            return bundled
    if not path.is_file():
        raise CliError(f"scenario file not found: {arg}", code=2)
    return path


def _read_scenario(path: Path, check: bool = True):
    text = path.read_text()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if check:
        return load_scenario(text), digest
    import yaml

    return scenario_from_dict(yaml.safe_load(text), check=False), digest


def _solver_options(args) -> SolverOptions:
    kw = {}
    if args.max_iters is not None:
        kw["max_outer"] = args.max_iters
    if args.delta_th is not None:
        kw["delta_th"] = args.delta_th
    return SolverOptions(**kw)


def _parse_capacities(text: str) -> list[float]:
    try:
        caps = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid capacity list: {text!r}") from exc
    if not caps:
        raise argparse.ArgumentTypeError("capacity list is empty")
    return caps


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_optimize(args, manifest: RunManifest, out_dir: Path) -> int:
    s, _ = _read_scenario(Path(manifest.scenario_path))
    if args.capacity is not None:
        s = s.with_capacity(args.capacity)
    opts = _solver_options(args)
    manifest.options.update(asdict(opts))
    design, state = solve_robust(s, opts)
    out_dir.mkdir(parents=True, exist_ok=True)
    for j in range(design.n_ru):
        name = f"psd_ru{j + 1:02d}.csv"
        write_spectrum_csv(out_dir / name, design.grid, design.sq[j], "sq_mw_per_hz")
        manifest.outputs.append(name)
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "t", "aggregate_m_change"])
        changes = [float("nan")] + state.changes
        for i, (t, ch) in enumerate(zip(state.history, changes)):
            w.writerow([i, _fmt(t), _fmt(ch)])
    manifest.outputs.append("trace.csv")
    manifest.options["converged"] = state.converged
    manifest.options["dc_iterations"] = state.iteration
    print(f"worst-case relaxed CRB {state.t:.6g} m^2 after {state.iteration} DC iterations"
          f" ({'converged' if state.converged else 'NOT converged'})")
    return 0


def cmd_sweep(args, manifest: RunManifest, out_dir: Path) -> int:
    s, _ = _read_scenario(Path(manifest.scenario_path))
    cfg = EvalConfig(
        n_positions=args.positions,
        n_fading_draws=args.fading_draws,
        seed=args.seed,
        capacities=tuple(args.capacities),
    )
    opts = _solver_options(args)
    manifest.options.update({"eval": asdict(cfg), "solver": asdict(opts), "jobs": args.jobs})
    report = sweep_capacity(s, cfg, opts, jobs=args.jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "report.csv")
    manifest.outputs.append("report.csv")
    failed = [r for r in report.rows if r.status.startswith("failed")]
    for r in report.rows:
        print(f"C={r.capacity:g}: proposed {r.proposed:.4g} m, baseline {r.baseline:.4g} m [{r.status}]")
    if failed:
        manifest.error = f"{len(failed)} capacity point(s) failed"
        return 1
    return 0


def cmd_check(args, manifest: RunManifest, out_dir: Path | None) -> int:
    s, _ = _read_scenario(Path(manifest.scenario_path), check=False)
    results = list(scenario_checks(s))
    gap = covering_gap(s, n_samples=args.samples, seed=args.seed)
    results.append(("covering", gap == 0.0, f"uncovered fraction {gap:.3g} of {args.samples} samples"))
    structurally_ok = all(ok for _, ok, _ in results)
    if structurally_ok:
        try:
            prob = RobustProblem(s)
            base = baseline_white_design(s, prob.grid)
            m, _ = charnes_cooper_forward(base.sq, prob.sz)
            crb = prob.crb_values(prob.to_u(m))
            bad = [int(l) for l in np.flatnonzero(~np.isfinite(crb))]
            results.append(("relaxation_psd", not bad, "baseline relaxation matrix PD for all circles"
                            + (f"; fails for circles {bad}" if bad else "")))
        except (UnlocalizableError, ValueError) as exc:
            results.append(("relaxation_psd", False, str(exc)))
    else:
        results.append(("relaxation_psd", False, "skipped: scenario invalid"))
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    manifest.options["checks"] = {name: ok for name, ok, _ in results}
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fronthaul-crb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--scenario", required=True, help="scenario file, or a bundled name such as paper_fig3")
        sp.add_argument("--out", required=out_required, type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=0)

    def solver_flags(sp):
        sp.add_argument("--max-iters", type=int, default=None, help="DC iteration cap")
        sp.add_argument("--delta-th", type=float, default=None, help="relative stopping threshold")

    op = sub.add_parser("optimize", help="run the robust design for one scenario")
    common(op)
    op.add_argument("--capacity", type=float, default=None, help="override every C_j (bits/s/Hz)")
    solver_flags(op)

    sw = sub.add_parser("sweep", help="proposed vs baseline accuracy over fronthaul capacities")
    common(sw)
    sw.add_argument("--capacities", type=_parse_capacities, required=True, help="comma-separated C values")
    sw.add_argument("--positions", type=int, default=400)
    sw.add_argument("--fading-draws", type=int, default=2000)
    sw.add_argument("--jobs", type=int, default=1, help="capacity points evaluated in parallel")
    solver_flags(sw)

    ck = sub.add_parser("check", help="validate a scenario and its circle covering")
    common(ck, out_required=False)
    ck.add_argument("--samples", type=int, default=100_000, help="covering check sample count")
    return p


COMMANDS = {"optimize": cmd_optimize, "sweep": cmd_sweep, "check": cmd_check}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    out_dir: Path | None = args.out
    manifest = RunManifest(args.command, args.scenario, "", {}, args.seed)
    t0 = time.perf_counter()
    code = 1
    try:
        path = _resolve_scenario(args.scenario)
        manifest.scenario_path = str(path)
        manifest.scenario_sha256 = hashlib.sha256(path.read_bytes()).hexdigest()
        code = COMMANDS[args.command](args, manifest, out_dir)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.error, code = str(exc), exc.code
    except (ScenarioError, UnlocalizableError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        manifest.error, code = f"{type(exc).__name__}: {exc}", 1
    finally:
        manifest.duration_s = time.perf_counter() - t0
        manifest.status = "ok" if code == 0 else "failed"
        if out_dir is not None:
            manifest.write(out_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
