"""Fisher information, CRB, the worst-case relaxation matrix and fronthaul rates.

Information matrices are symmetric 2x2 and handled in closed form. Units:
spectra in mW/Hz, distances in meters, information in 1/m^2, rates in
bits/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UnlocalizableError
from .scenario import CircleGeometry, Scenario
from .spectra import FrequencyGrid, SampledSpectrum, scenario_spectra

PSD_RTOL = 1e-9


@dataclass(frozen=True)
class SymMat2:
    """Symmetric matrix [[a, b], [b, c]]."""

    a: float
    b: float
    c: float

    @classmethod
    def from_array(cls, m: np.ndarray) -> "SymMat2":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, self.c]])

    @property
    def trace(self) -> float:
        return self.a + self.c

    @property
    def det(self) -> float:
        return self.a * self.c - self.b * self.b

    def eigvalsh(self) -> np.ndarray:
        half_tr = 0.5 * (self.a + self.c)
        rad = np.hypot(0.5 * (self.a - self.c), self.b)
        return np.array([half_tr - rad, half_tr + rad])

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        lo, hi = self.eigvalsh()
        scale = max(abs(lo), abs(hi))
        return bool(np.isfinite(scale)) and lo >= -rtol * scale

    def __add__(self, other: "SymMat2") -> "SymMat2":
        return SymMat2(self.a + other.a, self.b + other.b, self.c + other.c)

    def __mul__(self, k: float) -> "SymMat2":
        return SymMat2(k * self.a, k * self.b, k * self.c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class QuantizerDesign:
    """Per-RU quantization noise PSD samples, shape (N_r, N_f/2), in mW/Hz."""

    grid: FrequencyGrid
    sq: np.ndarray
    white_levels: np.ndarray | None = None

    def __post_init__(self) -> None:
        sq = np.array(self.sq, dtype=float)
        if sq.ndim != 2 or sq.shape[1] != self.grid.n_nodes:
            raise ValueError(f"expected (N_r, {self.grid.n_nodes}) PSD samples, got {sq.shape}")
        if not np.all(np.isfinite(sq)) or np.any(sq <= 0):
            raise ValueError("quantization noise PSD must be finite and strictly positive")
        sq.setflags(write=False)
        object.__setattr__(self, "sq", sq)

    @property
    def n_ru(self) -> int:
        return self.sq.shape[0]

    def spectrum(self, j: int) -> SampledSpectrum:
        return SampledSpectrum(self.grid, self.sq[j])

    @classmethod
    def white(cls, grid: FrequencyGrid, levels: Sequence[float]) -> "QuantizerDesign":
        levels = np.asarray(levels, dtype=float)
        return cls(grid, np.repeat(levels[:, None], grid.n_nodes, axis=1), levels)


def direction_matrix(phi: float) -> SymMat2:
    c, s = np.cos(phi), np.sin(phi)
    return SymMat2(c * c, c * s, s * s)


def relaxed_direction_matrix(phi: float, eps: float) -> SymMat2:
    c, s = np.cos(phi), np.sin(phi)
    se = np.sin(eps)
    return SymMat2(c * c - se, c * s, s * s - se)


def ranging_information(
    sq: np.ndarray, sx: np.ndarray, sz: np.ndarray, grid: FrequencyGrid, propagation_speed: float
) -> np.ndarray:
    """Per-RU scalar (8 pi^2 / c^2) * integral f^2 S_x / (S_z + S_q) df, before the gain factor."""
    f2 = grid.nodes**2
    return (8.0 * np.pi**2 / propagation_speed**2) * grid.integrate(f2 * sx / (sz + sq))


def _check_grid(q: QuantizerDesign, grid: FrequencyGrid) -> None:
    if q.grid != grid:
        raise ValueError("quantizer design and frequency grid do not match")


def efim_from_weights(angles: np.ndarray, weights: np.ndarray) -> SymMat2:
    """Sum over RUs of direction_matrix(angle) * weight."""
    c, s = np.cos(angles), np.sin(angles)
    return SymMat2(float(np.sum(weights * c * c)), float(np.sum(weights * c * s)), float(np.sum(weights * s * s)))


def efim(
    angles: Sequence[float],
    gains: Sequence[float],
    q: QuantizerDesign,
    s: Scenario,
    grid: FrequencyGrid,
) -> SymMat2:
    """Equivalent Fisher information for the target position."""
    _check_grid(q, grid)
    gains = np.asarray(gains, dtype=float)
    if np.any(gains < 0):
        raise ValueError("channel gains must be nonnegative")
    sx, sz = scenario_spectra(s, grid)
    kappa = ranging_information(q.sq, sx, sz, grid, s.propagation_speed)
    return efim_from_weights(np.asarray(angles, dtype=float), gains**2 * kappa)


def crb_trace(J: SymMat2 | np.ndarray) -> float:
    """tr(J^-1) in m^2; raises UnlocalizableError on singular or indefinite J."""
    if not isinstance(J, SymMat2):
        J = SymMat2.from_array(J)
    det = J.det
    tr = J.trace
    if not (np.isfinite(det) and np.isfinite(tr)) or J.a <= 0 or J.c <= 0 or det <= 1e-14 * tr * tr:
        raise UnlocalizableError("unlocalizable configuration: information matrix is singular or indefinite")
    return tr / det


def worst_case_q_matrix(
    cg: CircleGeometry, q: QuantizerDesign, s: Scenario, grid: FrequencyGrid
) -> SymMat2:
    """Relaxation matrix at the smallest gain of the circle; may be indefinite."""
    _check_grid(q, grid)
    sx, sz = scenario_spectra(s, grid)
    kappa = ranging_information(q.sq, sx, sz, grid, s.propagation_speed)
    w = cg.gain_std_lower**2 * kappa
    c, sn = np.cos(cg.nominal_angle), np.sin(cg.nominal_angle)
    se = np.sin(cg.angular_uncertainty)
    return SymMat2(
        float(np.sum(w * (c * c - se))), float(np.sum(w * c * sn)), float(np.sum(w * (sn * sn - se)))
    )


def rate_from_spectra(
    gain_power: float | np.ndarray, sq: np.ndarray, sx: np.ndarray, sz: np.ndarray, grid: FrequencyGrid
) -> np.ndarray:
    """Band-averaged log2(1 + (gain_power S_x + S_z) / S_q); broadcasts over leading axes."""
    sq = np.asarray(sq, dtype=float)
    if np.any(sq <= 0):
        raise ValueError("quantization noise PSD must be strictly positive")
    gp = np.asarray(gain_power, dtype=float)[..., None]
    return grid.band_average(np.log2(1.0 + (gp * sx + sz) / sq))


def _ru_spectra(s: Scenario, grid: FrequencyGrid, ru: int) -> tuple[np.ndarray, np.ndarray]:
    sx, sz = scenario_spectra(s, grid)
    return sx, sz[ru]


def _values(sq: SampledSpectrum | np.ndarray) -> np.ndarray:
    return sq.values if isinstance(sq, SampledSpectrum) else np.asarray(sq, dtype=float)


def rate(sigma_g: float, sq: SampledSpectrum | np.ndarray, s: Scenario, grid: FrequencyGrid, ru: int = 0) -> float:
    """Fronthaul rate of RU `ru` with the fading averaged inside the log (Jensen bound)."""
    sx, sz = _ru_spectra(s, grid, ru)
    return float(rate_from_spectra(sigma_g**2, _values(sq), sx, sz, grid))


def per_realization_rate(
    g: float | np.ndarray, sq: SampledSpectrum | np.ndarray, s: Scenario, grid: FrequencyGrid, ru: int = 0
) -> float | np.ndarray:
    """Fronthaul rate for a given gain realization; vectorized over `g`."""
    sx, sz = _ru_spectra(s, grid, ru)
    out = rate_from_spectra(np.asarray(g, dtype=float) ** 2, _values(sq), sx, sz, grid)
    return float(out) if np.ndim(out) == 0 else out
