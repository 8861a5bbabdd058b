"""Robust fronthaul quantization design by DC iteration, plus the white baseline."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import RelaxationInapplicableError, SolverError
from .inner import RobustProblem, SolverOptions, check_localizable, solve_inner_normalized
from .metrics import QuantizerDesign, rate_from_spectra
from .scenario import Scenario, all_circle_geometry
from .spectra import FrequencyGrid, SampledSpectrum, scenario_grid, scenario_spectra

log = logging.getLogger(__name__)

__all__ = [
    "DcState",
    "SolverOptions",
    "baseline_white_design",
    "charnes_cooper_forward",
    "initialize_m",
    "recover_sq",
    "solve_robust",
]


@dataclass
class DcState:
    """Transformed variables of the current iterate and the iteration record."""

    iteration: int
    m: np.ndarray  # (N_r, N_f/2)
    n: np.ndarray
    t: float
    sz: np.ndarray
    grid: FrequencyGrid
    history: list[float] = field(default_factory=list)
    changes: list[float] = field(default_factory=list)
    newton_steps: list[int] = field(default_factory=list)
    converged: bool = False

    def coupling_residual(self) -> float:
        return float(np.max(np.abs(self.sz * self.m + self.n - 1.0)))


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, SampledSpectrum) else np.asarray(x, dtype=float)


def charnes_cooper_forward(sq, sz) -> tuple[np.ndarray, np.ndarray]:
    """m = A/(1 + S_z A), n = 1/(1 + S_z A) with A = 1/S_q."""
    sq, sz = _values(sq), _values(sz)
    if np.any(sq <= 0) or not np.all(np.isfinite(sq)):
        raise ValueError("quantization noise PSD must be finite and strictly positive")
    # multiply through by S_q to avoid forming 1/S_q
    denom = sq + sz
    return 1.0 / denom, sq / denom


def recover_sq(state: DcState) -> QuantizerDesign:
    m = np.asarray(state.m, dtype=float)
    if np.any(m <= 0):
        raise SolverError("channel discarded entirely: m is zero at some node")
    return QuantizerDesign(state.grid, state.n / m)


def _white_rate(level: float, gain_power: float, sx: np.ndarray, sz: np.ndarray, grid: FrequencyGrid) -> float:
    return float(rate_from_spectra(gain_power, np.full(grid.n_nodes, level), sx, sz, grid))


def _bisect_white_level(capacity: float, gain_power: float, sx, sz, grid: FrequencyGrid) -> float:
    """Level sigma_q^2 at which the white-noise rate equals `capacity`; bisection in log scale."""
    if not capacity > 0:
        raise ValueError("fronthaul capacity must be positive for a finite white level")
    power = float(np.mean(gain_power * sx + sz))
    lo = hi = np.log(power)
    while _white_rate(np.exp(lo), gain_power, sx, sz, grid) <= capacity:
        lo -= 4.0
    while _white_rate(np.exp(hi), gain_power, sx, sz, grid) > capacity:
        hi += 4.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _white_rate(np.exp(mid), gain_power, sx, sz, grid) > capacity:
            lo = mid
        else:
            hi = mid
    # hi keeps the rate at or below capacity
    return float(np.exp(hi))


def baseline_white_design(s: Scenario, grid: FrequencyGrid | None = None) -> QuantizerDesign:
    """White quantization noise meeting each RU's rate budget with equality at its worst circle."""
    grid = grid or scenario_grid(s)
    sx, sz = scenario_spectra(s, grid)
    geoms = all_circle_geometry(s)
    sig_u = np.stack([g.gain_std_upper for g in geoms])  # (L, J)
    # rate grows with the gain, so the largest upper bound binds; argmax keeps the lowest index on ties
    binding = np.argmax(sig_u, axis=0)
    levels = np.array(
        [
            _bisect_white_level(s.fronthaul_capacity[j], sig_u[binding[j], j] ** 2, sx, sz[j], grid)
            for j in range(s.n_ru)
        ]
    )
    return QuantizerDesign.white(grid, levels)


def initialize_m(s: Scenario, grid: FrequencyGrid | None = None, margin: float = 1.01) -> np.ndarray:
    """Starting point: the transformed baseline with its white levels inflated by `margin`."""
    grid = grid or scenario_grid(s)
    base = baseline_white_design(s, grid)
    _, sz = scenario_spectra(s, grid)
    m, _ = charnes_cooper_forward(base.sq * margin, sz)
    return m


def solve_robust(s: Scenario, opts: SolverOptions | None = None) -> tuple[QuantizerDesign, DcState]:
    """Minimize the worst-case relaxed CRB over all circles under the fronthaul budgets."""
    opts = opts or SolverOptions()
    prob = RobustProblem(s)
    grid = prob.grid
    m = initialize_m(s, grid, opts.init_margin)
    u = prob.to_u(m)
    check_localizable(prob, u)
    state = DcState(0, m, 1.0 - u, float(np.max(prob.crb_values(u))), prob.sz, grid)
    state.history.append(state.t)

    for i in range(1, opts.max_outer + 1):
        u_new, t, n_newton = solve_inner_normalized(prob, u, opts)
        m_new = prob.to_m(u_new)
        change = float(np.sum(np.abs(m_new - m)) / np.sum(np.abs(m)))
        # true objective at the new iterate; the barrier's t exceeds it by the slack
        t_true = float(np.max(prob.crb_values(u_new)))
        state.iteration, state.m, state.n, state.t = i, m_new, 1.0 - u_new, t_true
        state.history.append(t_true)
        state.changes.append(change)
        state.newton_steps.append(n_newton)
        log.info("DC iteration %d: t=%.10g change=%.3g newton=%d", i, t_true, change, n_newton)
        u, m = u_new, m_new
        if change < opts.delta_th:
            state.converged = True
            break
    else:
        warnings.warn(
            f"DC iteration did not converge within {opts.max_outer} iterations; returning last iterate",
            RuntimeWarning,
            stacklevel=2,
        )

    if not np.all(np.isfinite(prob.crb_values(u))):
        raise RelaxationInapplicableError("relaxation bound inapplicable for the final design")
    return recover_sq(state), state
