"""Problem instances: geometry, channels, spectra levels and fronthaul budgets.

A scenario file is YAML (JSON is accepted too, being a subset). Lengths are
in meters, frequencies in Hz, spectral levels in dBm/Hz and capacities in
bits/s/Hz. Per-RU quantities may be given as a list or as a single value that
is broadcast to every RU.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

REQUIRED_KEYS = (
    "area_side",
    "ru_positions",
    "circles",
    "uncertainty_region",
    "path_loss_exponent",
    "fading_power",
    "bandwidth",
    "signal_esd_dbm_per_hz",
    "noise_model",
    "fronthaul_capacity",
    "propagation_speed",
    "grid_points",
)


class ScenarioError(ValueError):
    """Raised when a scenario document cannot be parsed or violates an invariant."""


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class NoiseModel:
    n0_dbm_per_hz: float
    rho: float


@dataclass(frozen=True, eq=False)
class Scenario:
    area_side: float
    ru_positions: np.ndarray
    circles: tuple[Circle, ...]
    uncertainty_region: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    path_loss_exponent: float
    fading_power: np.ndarray
    bandwidth: float
    signal_esd_dbm_per_hz: float
    noise_model: tuple[NoiseModel, ...]
    fronthaul_capacity: np.ndarray
    propagation_speed: float
    grid_points: int
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        for attr in ("ru_positions", "fading_power", "fronthaul_capacity"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    @property
    def n_ru(self) -> int:
        return len(self.ru_positions)

    @property
    def n_circles(self) -> int:
        return len(self.circles)

    def with_capacity(self, capacity: float | Sequence[float]) -> "Scenario":
        cap = np.broadcast_to(np.asarray(capacity, dtype=float), (self.n_ru,)).copy()
        new = dataclasses.replace(self, fronthaul_capacity=cap)
        validate(new)
        return new

    def to_dict(self) -> dict[str, Any]:
        xmin, xmax, ymin, ymax = self.uncertainty_region
        return {
            "name": self.name,
            "area_side": float(self.area_side),
            "ru_positions": [[float(x), float(y)] for x, y in self.ru_positions],
            "circles": [
                {"center": [float(c.center[0]), float(c.center[1])], "radius": float(c.radius)}
                for c in self.circles
            ],
            "uncertainty_region": {"x_range": [xmin, xmax], "y_range": [ymin, ymax]},
            "path_loss_exponent": float(self.path_loss_exponent),
            "fading_power": [float(v) for v in self.fading_power],
            "bandwidth": float(self.bandwidth),
            "signal_esd_dbm_per_hz": float(self.signal_esd_dbm_per_hz),
            "noise_model": [
                {"n0_dbm_per_hz": float(nm.n0_dbm_per_hz), "rho": float(nm.rho)}
                for nm in self.noise_model
            ],
            "fronthaul_capacity": [float(v) for v in self.fronthaul_capacity],
            "propagation_speed": float(self.propagation_speed),
            "grid_points": int(self.grid_points),
        }

    def content_hash(self) -> str:
        """sha256 of the canonical JSON form; the name is a label and is left out."""
        doc = self.to_dict()
        del doc["name"]
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.content_hash() == other.content_hash()

    def __hash__(self) -> int:
        return hash(self.content_hash())


@dataclass(frozen=True)
class CircleGeometry:
    """Per-RU nominal geometry and channel-gain bounds for one covering circle."""

    circle_index: int
    nominal_distance: np.ndarray
    nominal_angle: np.ndarray
    angular_uncertainty: np.ndarray
    gain_std_lower: np.ndarray
    gain_std_upper: np.ndarray


def _per_ru(value: Any, n_ru: int, key: str) -> list:
    if isinstance(value, (list, tuple)):
        if len(value) != n_ru:
            raise ScenarioError(f"{key}: expected {n_ru} per-RU entries, got {len(value)}")
        return list(value)
    return [value] * n_ru


def _region(value: Any) -> tuple[float, float, float, float]:
    try:
        if "x_range" in value:
            (xmin, xmax), (ymin, ymax) = value["x_range"], value["y_range"]
        else:
            cx, cy = value["center"]
            half = 0.5 * float(value["side"])
            xmin, xmax, ymin, ymax = cx - half, cx + half, cy - half, cy + half
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(
            "uncertainty_region: expected {x_range, y_range} or {center, side}"
        ) from exc
    return float(xmin), float(xmax), float(ymin), float(ymax)


def scenario_from_dict(doc: dict[str, Any], check: bool = True) -> Scenario:
    """Build a Scenario from a parsed document; `check=False` skips invariant checks."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise ScenarioError(f"missing required keys: {', '.join(missing)}")
    try:
        ru = np.asarray(doc["ru_positions"], dtype=float)
        if ru.ndim != 2 or ru.shape[1] != 2:
            raise ScenarioError("ru_positions: expected a list of [x, y] pairs")
        n_ru = len(ru)
        circles = tuple(
            Circle(center=(float(c["center"][0]), float(c["center"][1])), radius=float(c["radius"]))
            for c in doc["circles"]
        )
        noise = tuple(
            NoiseModel(float(nm["n0_dbm_per_hz"]), float(nm["rho"]))
            for nm in _per_ru(doc["noise_model"], n_ru, "noise_model")
        )
        grid_points = doc["grid_points"]
        if isinstance(grid_points, bool) or int(grid_points) != grid_points:
            raise ScenarioError("grid_points must be an integer")
        s = Scenario(
            area_side=float(doc["area_side"]),
            ru_positions=ru,
            circles=circles,
            uncertainty_region=_region(doc["uncertainty_region"]),
            path_loss_exponent=float(doc["path_loss_exponent"]),
            fading_power=np.asarray(_per_ru(doc["fading_power"], n_ru, "fading_power"), dtype=float),
            bandwidth=float(doc["bandwidth"]),
            signal_esd_dbm_per_hz=float(doc["signal_esd_dbm_per_hz"]),
            noise_model=noise,
            fronthaul_capacity=np.asarray(
                _per_ru(doc["fronthaul_capacity"], n_ru, "fronthaul_capacity"), dtype=float
            ),
            propagation_speed=float(doc["propagation_speed"]),
            grid_points=int(grid_points),
            name=str(doc.get("name", "")),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc
    if check:
        validate(s)
    return s


def load_scenario(document: str) -> Scenario:
    """Parse and validate a scenario from YAML/JSON text."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"parse error: {exc}") from exc
    return scenario_from_dict(doc)


def load_scenario_file(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text())


def bundled_scenario_path(name: str = "paper_fig3") -> Path:
    return Path(str(resources.files("fronthaul_crb") / "data" / f"{name}.yaml"))


def bundled_scenario(name: str = "paper_fig3") -> Scenario:
    return load_scenario_file(bundled_scenario_path(name))


def scenario_checks(s: Scenario) -> list[tuple[str, bool, str]]:
    """Evaluate every invariant; returns (name, passed, detail) triples."""
    out: list[tuple[str, bool, str]] = []

    def add(name: str, ok: bool, detail: str = "") -> None:
        out.append((name, bool(ok), detail))

    add("ru_count", s.n_ru >= 3, f"{s.n_ru} RUs (need at least 3)")
    add("circle_count", s.n_circles >= 1, f"{s.n_circles} circles")
    positives = {
        "area_side": s.area_side,
        "bandwidth": s.bandwidth,
        "propagation_speed": s.propagation_speed,
        "path_loss_exponent": s.path_loss_exponent,
    }
    for key, val in positives.items():
        add(f"positive_{key}", np.isfinite(val) and val > 0, f"{key}={val}")
    add("positive_fading_power", bool(np.all(s.fading_power > 0)), "fading_power > 0")
    add(
        "positive_capacity",
        bool(np.all(np.isfinite(s.fronthaul_capacity)) and np.all(s.fronthaul_capacity > 0)),
        "fronthaul_capacity > 0",
    )
    rhos = [nm.rho for nm in s.noise_model]
    add("ar_coefficient", all(0.0 <= r < 1.0 for r in rhos), "rho in [0, 1)")
    add(
        "grid_points",
        s.grid_points >= 4 and s.grid_points % 2 == 0,
        f"grid_points={s.grid_points} (even, >= 4)",
    )
    add("positive_radius", all(c.radius > 0 for c in s.circles), "circle radius > 0")

    half = 0.5 * s.area_side
    tol = 1e-9 * max(s.area_side, 1.0)
    ru_inside = s.n_ru == 0 or bool(np.all(np.abs(s.ru_positions) <= half + tol))
    add("rus_inside_area", ru_inside, "RU positions within the square area")
    circ_inside = all(
        max(abs(c.center[0]), abs(c.center[1])) + c.radius <= half + tol for c in s.circles
    )
    add("circles_inside_area", circ_inside, "every circle lies inside the area")
    xmin, xmax, ymin, ymax = s.uncertainty_region
    add(
        "region_inside_area",
        xmin < xmax and ymin < ymax and max(abs(xmin), abs(xmax), abs(ymin), abs(ymax)) <= half + tol,
        "uncertainty region is a nonempty rectangle inside the area",
    )
    worst = np.inf
    for c in s.circles:
        if s.n_ru:
            d = np.hypot(s.ru_positions[:, 0] - c.center[0], s.ru_positions[:, 1] - c.center[1])
            worst = min(worst, float(np.min(d - c.radius)))
    add(
        "circles_exclude_rus",
        worst > 0,
        "every RU is farther than the radius from each circle center"
        + ("" if np.isinf(worst) else f" (min margin {worst:.6g} m)"),
    )
    return out


def validate(s: Scenario) -> None:
    for name, ok, detail in scenario_checks(s):
        if not ok:
            raise ScenarioError(f"invariant violated: {name}: {detail}")


def derive_circle_geometry(s: Scenario, l: int) -> CircleGeometry:
    circle = s.circles[l]
    cx, cy = circle.center
    dx = cx - s.ru_positions[:, 0]
    dy = cy - s.ru_positions[:, 1]
    d = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    r = circle.radius
    sigma_alpha = np.sqrt(s.fading_power)
    mu = s.path_loss_exponent
    return CircleGeometry(
        circle_index=l,
        nominal_distance=d,
        nominal_angle=phi,
        angular_uncertainty=np.arcsin(r / d),
        gain_std_lower=sigma_alpha / (d + r) ** mu,
        gain_std_upper=sigma_alpha / (d - r) ** mu,
    )


def all_circle_geometry(s: Scenario) -> list[CircleGeometry]:
    return [derive_circle_geometry(s, l) for l in range(s.n_circles)]


def default_ru_layout(area_side: float, n_ru: int = 16) -> np.ndarray:
    """RUs equally spaced along the perimeter of a square centered at the origin.

    Walks counter-clockwise from the lower-left corner, so corners are included
    and each one appears once.
    """
    if n_ru <= 0 or n_ru % 4:
        raise ValueError(f"n_ru must be a positive multiple of 4, got {n_ru}")
    per_side = n_ru // 4
    h = 0.5 * area_side
    steps = np.arange(per_side) * (area_side / per_side)
    corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
    directions = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    pts = [
        (x0 + dx * t, y0 + dy * t)
        for (x0, y0), (dx, dy) in zip(corners, directions)
        for t in steps
    ]
    return np.array(pts, dtype=float)


def covering_gap(s: Scenario, n_samples: int = 100_000, seed: int = 0) -> float:
    """Fraction of uniform samples of the uncertainty region outside every circle."""
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = s.uncertainty_region
    pts = np.column_stack([rng.uniform(xmin, xmax, n_samples), rng.uniform(ymin, ymax, n_samples)])
    covered = np.zeros(n_samples, dtype=bool)
    for c in s.circles:
        d = np.hypot(pts[:, 0] - c.center[0], pts[:, 1] - c.center[1])
        covered |= d <= c.radius * (1 + 1e-12)
    return float(np.mean(~covered))
