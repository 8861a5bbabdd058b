import copy

import numpy as np
import pytest

from fronthaul_crb.evaluation import EvalConfig, sweep_capacity
from fronthaul_crb.scenario import bundled_scenario, default_ru_layout, scenario_from_dict

FIG3_CAPACITIES = (0.1, 0.5, 1.0, 2.0, 5.0)


def toy_document(**overrides):
    """A small valid scenario: 8 perimeter RUs, one circle at the origin, 20 grid points."""
    doc = {
        "name": "toy",
        "area_side": 400.0,
        "ru_positions": default_ru_layout(400.0, 8).tolist(),
        "circles": [{"center": [0.0, 0.0], "radius": 40.0}],
        "uncertainty_region": {"center": [0.0, 0.0], "side": 40.0},
        "path_loss_exponent": 3.0,
        "fading_power": 1.0,
        "bandwidth": 1.0e6,
        "signal_esd_dbm_per_hz": -60.0,
        "noise_model": {"n0_dbm_per_hz": -174.0, "rho": 0.5},
        "fronthaul_capacity": 1.0,
        "propagation_speed": 3.0e8,
        "grid_points": 20,
    }
    doc.update(copy.deepcopy(overrides))
    return doc


def toy_scenario(check=True, **overrides):
    return scenario_from_dict(toy_document(**overrides), check=check)


def white_document(**overrides):
    """S_x = S_z = 1 mW/Hz everywhere (0 dBm/Hz levels, white noise)."""
    base = dict(signal_esd_dbm_per_hz=0.0, noise_model={"n0_dbm_per_hz": 0.0, "rho": 0.0})
    base.update(overrides)
    return toy_document(**base)


def random_toy_scenario(seed):
    """Random but well-posed instance for solver regression runs."""
    rng = np.random.default_rng(seed)
    side = 400.0
    n_ru = int(rng.choice([4, 8, 12]))
    radius = float(rng.uniform(15.0, 40.0))
    circles = []
    for _ in range(int(rng.integers(1, 3))):
        cx, cy = rng.uniform(-60.0, 60.0, size=2)
        circles.append({"center": [float(cx), float(cy)], "radius": radius})
    doc = toy_document(
        name=f"random-{seed}",
        area_side=side,
        ru_positions=default_ru_layout(side, n_ru).tolist(),
        circles=circles,
        uncertainty_region={"center": circles[0]["center"], "side": radius},
        noise_model={"n0_dbm_per_hz": -174.0, "rho": float(rng.uniform(0.0, 0.9))},
        fronthaul_capacity=rng.uniform(0.2, 3.0, size=n_ru).round(3).tolist(),
        grid_points=int(rng.choice([12, 16, 20])),
    )
    return scenario_from_dict(doc)


@pytest.fixture(scope="session")
def fig3():
    return bundled_scenario("paper_fig3")


@pytest.fixture(scope="session")
def fig3_sweep(fig3):
    """Full desk-scale sweep, computed once and shared by the acceptance tests."""
    cfg = EvalConfig(capacities=FIG3_CAPACITIES)
    return sweep_capacity(fig3, cfg)
