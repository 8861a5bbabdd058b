"""One-sided frequency grid and the sampled signal/noise spectra living on it."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FrequencyGrid:
    """Right-endpoint nodes f_n = n B / N_f, n = 1..N_f/2, of the half band [0, B/2].

    Spectra are even in f, so a band integral over [-B/2, B/2] is the node sum
    weighted by 2B/N_f and a band average uses 2/N_f.
    """

    bandwidth: float
    n_points: int

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if int(self.n_points) != self.n_points or self.n_points < 4 or self.n_points % 2:
            raise ValueError(f"grid points must be an even integer >= 4, got {self.n_points}")

    @property
    def n_nodes(self) -> int:
        return self.n_points // 2

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n_nodes + 1) * (self.bandwidth / self.n_points)

    @property
    def integral_weight(self) -> float:
        return 2.0 * self.bandwidth / self.n_points

    @property
    def normalized_weight(self) -> float:
        return 2.0 / self.n_points

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Band integral of an even function sampled at the nodes (last axis)."""
        return self.integral_weight * np.sum(values, axis=-1)

    def band_average(self, values: np.ndarray) -> np.ndarray:
        return self.normalized_weight * np.sum(values, axis=-1)


@dataclass(frozen=True)
class SampledSpectrum:
    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectrum samples must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_csv(self, path: str | Path, value_column: str = "value_mw_per_hz") -> None:
        write_spectrum_csv(path, self.grid, self.values, value_column)


def write_spectrum_csv(
    path: str | Path, grid: FrequencyGrid, values: np.ndarray, value_column: str = "value_mw_per_hz"
) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_hz", value_column])
        for f, v in zip(grid.nodes, values):
            w.writerow([repr(float(f)), repr(float(v))])


def read_spectrum_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def dbm_to_mw(level_dbm: float) -> float:
    return 10.0 ** (level_dbm / 10.0)


def make_grid(bandwidth: float, n_points: int) -> FrequencyGrid:
    return FrequencyGrid(float(bandwidth), int(n_points))


def flat_signal_esd(level_dbm_per_hz: float, grid: FrequencyGrid) -> SampledSpectrum:
    return SampledSpectrum(grid, np.full(grid.n_nodes, dbm_to_mw(level_dbm_per_hz)))


def ar1_psd_values(n0_mw: float, rho: float, f: np.ndarray, bandwidth: float) -> np.ndarray:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"AR(1) coefficient must lie in [0, 1), got {rho}")
    theta = 2.0 * np.pi * np.asarray(f) / bandwidth
    return n0_mw * (1.0 - rho**2) / (1.0 - 2.0 * rho * np.cos(theta) + rho**2)


def ar1_noise_psd(n0_dbm_per_hz: float, rho: float, grid: FrequencyGrid) -> SampledSpectrum:
    """N0 (1 - rho^2) / |1 - rho exp(-j 2 pi f / B)|^2 on the grid nodes."""
    return SampledSpectrum(grid, ar1_psd_values(dbm_to_mw(n0_dbm_per_hz), rho, grid.nodes, grid.bandwidth))


def scenario_grid(s) -> FrequencyGrid:
    return make_grid(s.bandwidth, s.grid_points)


def scenario_spectra(s, grid: FrequencyGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Signal ESD samples (N,) and per-RU noise PSD samples (N_r, N) in mW/Hz."""
    grid = grid or scenario_grid(s)
    sx = flat_signal_esd(s.signal_esd_dbm_per_hz, grid).values
    sz = np.stack([ar1_noise_psd(nm.n0_dbm_per_hz, nm.rho, grid).values for nm in s.noise_model])
    return sx, sz
