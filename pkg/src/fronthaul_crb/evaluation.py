"""Monte Carlo evaluation of designs: worst-over-positions average CRB and PSD shaping."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .inner import SolverOptions
from .metrics import QuantizerDesign, ranging_information
from .scenario import Scenario
from .solver import baseline_white_design, solve_robust
from .spectra import FrequencyGrid, scenario_grid, scenario_spectra

log = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "c_bits_s_hz",
    "sqrt_worst_avg_spe_m_proposed",
    "sqrt_worst_avg_spe_m_baseline",
    "se_proposed_m",
    "se_baseline_m",
    "seed",
    "status",
]

MAX_CONDITION = 1e12


@dataclass
class EvalConfig:
    n_positions: int = 400
    n_fading_draws: int = 2000
    seed: int = 0
    capacities: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0, 5.0)

    def __post_init__(self) -> None:
        if self.n_positions <= 0 or self.n_fading_draws <= 0:
            raise ValueError("n_positions and n_fading_draws must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        self.capacities = tuple(float(c) for c in self.capacities)
        if not self.capacities or any(c <= 0 for c in self.capacities):
            raise ValueError("capacities must be a nonempty list of positive values")


@dataclass(frozen=True)
class CrbEstimate:
    mean: float  # m^2
    stderr: float
    n_draws: int
    rejected: int


@dataclass
class CapacityResult:
    capacity: float
    proposed: float = math.nan  # sqrt of worst average CRB, m
    baseline: float = math.nan
    se_proposed: float = math.nan
    se_baseline: float = math.nan
    status: str = "ok"
    dc_iterations: int = 0
    dc_converged: bool = False
    objective_history: list[float] = field(default_factory=list)
    rejected_draws: int = 0
    solve_seconds: float = math.nan


@dataclass
class EvalReport:
    rows: list[CapacityResult]
    seed: int
    scenario_hash: str
    designs: dict[float, tuple[QuantizerDesign | None, QuantizerDesign]] = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow(
                    [repr(r.capacity)]
                    + [repr(float(v)) for v in (r.proposed, r.baseline, r.se_proposed, r.se_baseline)]
                    + [self.seed, r.status]
                )


def sample_positions(region: Sequence[float], n: int, seed: int | Sequence[int]) -> np.ndarray:
    """n i.i.d. uniform points in the rectangle (xmin, xmax, ymin, ymax)."""
    xmin, xmax, ymin, ymax = region
    if not (xmin < xmax and ymin < ymax):
        raise ValueError("region must be a nonempty rectangle")
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])


def _geometry(position: np.ndarray, s: Scenario) -> tuple[np.ndarray, np.ndarray]:
    dx = position[0] - s.ru_positions[:, 0]
    dy = position[1] - s.ru_positions[:, 1]
    d = np.hypot(dx, dy)
    if np.any(d <= 0):
        raise ValueError("position coincides with an RU")
    return d, np.arctan2(dy, dx)


def crb_draws(
    angles: np.ndarray, weights: np.ndarray, fading_power: np.ndarray, n_draws: int, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """tr(J^-1) for n_draws Rayleigh realizations; ill-conditioned draws are redrawn.

    `weights` is the per-RU information scale with the squared gain left out:
    J = sum_j |alpha_j|^2 weights_j J_phi(angle_j).
    """
    c, s = np.cos(angles), np.sin(angles)
    basis = np.column_stack([weights * c * c, weights * c * s, weights * s * s])
    power = rng.exponential(fading_power, size=(n_draws, len(weights)))
    out = np.empty(n_draws)
    todo = np.arange(n_draws)
    rejected = 0
    for _ in range(1000):
        a, b, cc = (power[todo] @ basis).T
        det = a * cc - b * b
        half_tr = 0.5 * (a + cc)
        rad = np.hypot(0.5 * (a - cc), b)
        lo = half_tr - rad
        bad = ~((lo > 0) & ((half_tr + rad) <= MAX_CONDITION * lo))
        out[todo[~bad]] = (a + cc)[~bad] / det[~bad]
        if not bad.any():
            return out, rejected
        todo = todo[bad]
        rejected += len(todo)
        power[todo] = rng.exponential(fading_power, size=(len(todo), len(weights)))
    raise RuntimeError("too many ill-conditioned fading draws; configuration is unlocalizable")


def _ranging(design: QuantizerDesign, s: Scenario, grid: FrequencyGrid) -> np.ndarray:
    sx, sz = scenario_spectra(s, grid)
    return ranging_information(design.sq, sx, sz, grid, s.propagation_speed)


def avg_crb_at(
    position: Sequence[float],
    design: QuantizerDesign,
    s: Scenario,
    grid: FrequencyGrid | None = None,
    n_draws: int = 2000,
    seed: int | Sequence[int] = 0,
    kappa: np.ndarray | None = None,
) -> CrbEstimate:
    """Fading-averaged CRB (m^2) at one position with its standard error."""
    grid = grid or scenario_grid(s)
    d, phi = _geometry(np.asarray(position, dtype=float), s)
    if kappa is None:
        kappa = _ranging(design, s, grid)
    weights = kappa / d ** (2 * s.path_loss_exponent)
    vals, rejected = crb_draws(phi, weights, s.fading_power, n_draws, np.random.default_rng(seed))
    return CrbEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_draws)), n_draws, rejected)


def worst_average_crb(
    positions: np.ndarray,
    design: QuantizerDesign,
    s: Scenario,
    grid: FrequencyGrid,
    n_draws: int,
    seed: int,
) -> tuple[CrbEstimate, int]:
    """Largest fading-averaged CRB over the positions, and the index where it occurs.

    Position i uses the random stream (seed, i), so different designs evaluated
    with the same seed share their fading draws.
    """
    kappa = _ranging(design, s, grid)
    ests = [avg_crb_at(p, design, s, grid, n_draws, (seed, i), kappa) for i, p in enumerate(positions)]
    worst = int(np.argmax([e.mean for e in ests]))
    total_rejected = sum(e.rejected for e in ests)
    e = ests[worst]
    return CrbEstimate(e.mean, e.stderr, e.n_draws, total_rejected), worst


def _sqrt_with_se(est: CrbEstimate) -> tuple[float, float]:
    root = math.sqrt(est.mean)
    return root, est.stderr / (2.0 * root)


def evaluate_capacity(
    s: Scenario, capacity: float, cfg: EvalConfig, opts: SolverOptions | None = None
) -> tuple[CapacityResult, QuantizerDesign | None, QuantizerDesign]:
    s_c = s.with_capacity(capacity)
    grid = scenario_grid(s_c)
    positions = sample_positions(s_c.uncertainty_region, cfg.n_positions, cfg.seed)
    row = CapacityResult(capacity)

    baseline = baseline_white_design(s_c, grid)
    est_b, _ = worst_average_crb(positions, baseline, s_c, grid, cfg.n_fading_draws, cfg.seed)
    row.baseline, row.se_baseline = _sqrt_with_se(est_b)
    row.rejected_draws += est_b.rejected

    proposed = None
    t0 = time.perf_counter()
    try:
        proposed, state = solve_robust(s_c, opts)
    except Exception as exc:  # one failed point must not abort a sweep
        log.error("solver failed at C=%g: %s", capacity, exc)
        row.status = f"failed: {type(exc).__name__}: {exc}"
        return row, None, baseline
    row.solve_seconds = time.perf_counter() - t0
    row.dc_iterations, row.dc_converged = state.iteration, state.converged
    row.objective_history = list(state.history)
    est_p, _ = worst_average_crb(positions, proposed, s_c, grid, cfg.n_fading_draws, cfg.seed)
    row.proposed, row.se_proposed = _sqrt_with_se(est_p)
    row.rejected_draws += est_p.rejected
    if not state.converged:
        row.status = "ok (not converged)"
    return row, proposed, baseline


def _evaluate_point(args):
    return evaluate_capacity(*args)


def sweep_capacity(
    s: Scenario, cfg: EvalConfig, opts: SolverOptions | None = None, jobs: int = 1
) -> EvalReport:
    """Proposed and baseline sqrt worst-case average SPE for each capacity in cfg."""
    tasks = [(s, c, cfg, opts) for c in cfg.capacities]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_point, tasks))
    else:
        results = [_evaluate_point(t) for t in tasks]
    report = EvalReport([r[0] for r in results], cfg.seed, s.content_hash())
    for row, prop, base in results:
        report.designs[row.capacity] = (prop, base)
    return report


def psd_shape_diagnostic(design: QuantizerDesign, s: Scenario, grid: FrequencyGrid | None = None) -> np.ndarray:
    """Spearman correlation between S_q and S_z over the grid, per RU; NaN where S_q is constant."""
    grid = grid or scenario_grid(s)
    _, sz = scenario_spectra(s, grid)
    out = np.full(design.n_ru, np.nan)
    for j in range(design.n_ru):
        sq = design.sq[j]
        if np.ptp(sq) == 0 or np.ptp(sz[j]) == 0:
            continue
        out[j] = stats.spearmanr(sq, sz[j]).statistic
    return out
