"""End-to-end acceptance checks; each test prints one PASS/FAIL verdict line.

The desk-scale sweep over the bundled scenario is computed once per session
(conftest.fig3_sweep) and shared by criteria 1, 2, 3, 5, 7 and 8.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from fronthaul_crb.evaluation import crb_draws
from fronthaul_crb.inner import LN2, RobustProblem, linearized_rate_term
from fronthaul_crb.metrics import (
    QuantizerDesign,
    SymMat2,
    crb_trace,
    efim,
    per_realization_rate,
    rate,
    ranging_information,
    worst_case_q_matrix,
)
from fronthaul_crb.scenario import all_circle_geometry
from fronthaul_crb.solver import DcState, charnes_cooper_forward, recover_sq, solve_robust
from fronthaul_crb.spectra import make_grid, scenario_grid, scenario_spectra

from conftest import random_toy_scenario, white_document

TOY_SEEDS = (0, 1, 2, 3, 4)
MAX_SOLVE_SECONDS = 300.0


@pytest.fixture
def verdict(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number, ok, detail):
        line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        return ok

    return emit


@pytest.fixture(scope="module")
def toy_runs():
    return {seed: (random_toy_scenario(seed), *solve_robust(random_toy_scenario(seed))) for seed in TOY_SEEDS}


def rate_violation(design, s):
    """Largest rate(sigma_U, S_q) - C_j over circles and RUs, from the rate formula alone."""
    worst = -np.inf
    for g in all_circle_geometry(s):
        for j in range(s.n_ru):
            worst = max(worst, rate(g.gain_std_upper[j], design.sq[j], s, design.grid, ru=j) - s.fronthaul_capacity[j])
    return worst


def test_c01_dc_descent(fig3_sweep, toy_runs, verdict):
    problems = []
    for row in fig3_sweep.rows:
        h = np.array(row.objective_history)
        rise = float(np.max(np.diff(h))) if len(h) > 1 else -np.inf
        if row.status != "ok" or not row.dc_converged or row.dc_iterations > 100:
            problems.append(f"C={row.capacity}: status={row.status} converged={row.dc_converged}")
        if rise > 1e-8:
            problems.append(f"C={row.capacity}: objective rose by {rise:.3g}")
        if not row.solve_seconds <= MAX_SOLVE_SECONDS:
            problems.append(f"C={row.capacity}: solve took {row.solve_seconds:.0f} s")
    for seed, (s, _, state) in toy_runs.items():
        rise = float(np.max(np.diff(state.history)))
        if not state.converged or state.iteration > 100 or rise > 1e-8:
            problems.append(f"toy {seed}: converged={state.converged} rise={rise:.3g}")
    timing = ", ".join(f"C={r.capacity:g}: {r.dc_iterations} it/{r.solve_seconds:.0f} s" for r in fig3_sweep.rows)
    ok = verdict(1, not problems, "; ".join(problems) or f"non-increasing, converged ({timing}; 5 toys)")
    assert ok, problems


def test_c02_feasibility_oracle(fig3_sweep, fig3, toy_runs, verdict):
    worst = -np.inf
    for c, (proposed, _) in fig3_sweep.designs.items():
        assert proposed is not None, f"no design at C={c}"
        worst = max(worst, rate_violation(proposed, fig3.with_capacity(c)))
    for s, design, _ in toy_runs.values():
        worst = max(worst, rate_violation(design, s))
    ok = verdict(2, worst <= 1e-6, f"max rate - C over all circles, RUs, designs = {worst:.3g}")
    assert ok


def test_c03_baseline_contract(fig3_sweep, fig3, verdict):
    worst = 0.0
    for c, (_, base) in fig3_sweep.designs.items():
        s = fig3.with_capacity(c)
        geoms = all_circle_geometry(s)
        for j in range(s.n_ru):
            top = max(rate(g.gain_std_upper[j], base.sq[j], s, base.grid, ru=j) for g in geoms)
            worst = max(worst, abs(top - c) / c)
    ok = verdict(3, worst <= 1e-8, f"max |max_l rate - C| / C = {worst:.3g}")
    assert ok


def test_c04_jensen_inequalities(fig3, verdict):
    s = fig3.with_capacity(1.0)
    grid = scenario_grid(s)
    rng = np.random.default_rng(2024)
    n = 100_000
    g = all_circle_geometry(s)[0]
    sig = g.gain_std_upper[0]
    sq = np.linspace(0.5, 2.0, grid.n_nodes) * scenario_spectra(s, grid)[1][0]
    # Rayleigh amplitude with E|alpha|^2 = sigma^2
    amp = sig * np.sqrt(rng.exponential(1.0, n))
    r = per_realization_rate(amp, sq, s, grid, ru=0)
    r_bound = rate(sig, sq, s, grid, ru=0)
    r_ok = r.mean() <= r_bound + 3 * r.std(ddof=1) / math.sqrt(n)

    pos = np.array([30.0, -45.0])
    d = np.hypot(*(pos - s.ru_positions).T)
    phi = np.arctan2(pos[1] - s.ru_positions[:, 1], pos[0] - s.ru_positions[:, 0])
    q = QuantizerDesign.white(grid, np.full(s.n_ru, 1e-17))
    sx, sz = scenario_spectra(s, grid)
    kappa = ranging_information(q.sq, sx, sz, grid, s.propagation_speed)
    vals, _ = crb_draws(phi, kappa / d ** (2 * s.path_loss_exponent), s.fading_power, n, rng)
    c_bound = crb_trace(efim(phi, np.sqrt(s.fading_power) / d**s.path_loss_exponent, q, s, grid))
    c_ok = vals.mean() >= c_bound - 3 * vals.std(ddof=1) / math.sqrt(n)
    ok = verdict(
        4,
        r_ok and c_ok,
        f"mean rate {r.mean():.6g} <= bound {r_bound:.6g}; mean CRB {vals.mean():.6g} >= bound {c_bound:.6g} m^2",
    )
    assert ok


def test_c05_relaxation_conservatism(fig3_sweep, fig3, verdict):
    design, _ = fig3_sweep.designs[5.0]
    s = fig3.with_capacity(5.0)
    grid = design.grid
    rng = np.random.default_rng(5)
    violations = 0
    tightest = np.inf
    for g in all_circle_geometry(s):
        bound = crb_trace(worst_case_q_matrix(g, design, s, grid))
        for _ in range(1000):
            phi = g.nominal_angle + rng.uniform(-1.0, 1.0, s.n_ru) * g.angular_uncertainty
            sig = rng.uniform(g.gain_std_lower, g.gain_std_upper)
            val = crb_trace(efim(phi, sig, design, s, grid))
            tightest = min(tightest, bound / val)
            violations += val > bound * (1 + 1e-9)
    ok = verdict(5, violations == 0, f"{violations} violations in 4000 samples; min tr(Q^-1)/tr(J^-1) = {tightest:.4g}")
    assert ok


def _fd_relative_error(f, x, grad, scale):
    """Coordinate-wise central differences with steps proportional to `scale`."""
    fd = np.empty_like(x)
    for k in range(x.size):
        h = 1e-6 * scale.flat[k]
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        fd.flat[k] = (f(xp) - f(xm)) / (2 * h)
    return float(np.linalg.norm(fd - grad) / np.linalg.norm(grad))


def test_c06_gradient_checks(verdict):
    s = random_toy_scenario(0)  # two circles, so both constraint families are exercised
    prob = RobustProblem(s)
    rng = np.random.default_rng(6)
    anchor_u = rng.uniform(0.1, 0.9, prob.sz.shape)
    anchor_m = prob.to_m(anchor_u)
    errs = {"trace": 0.0, "log": 0.0, "h": 0.0, "rate": 0.0}
    points = 0
    while points < 100:
        u = rng.uniform(0.05, 0.95, prob.sz.shape)
        if not np.all(np.isfinite(prob.crb_values(u))):
            continue
        points += 1
        m = prob.to_m(u)
        l = points % prob.n_circles
        _, grad = prob.crb_term(m, l)
        errs["trace"] = max(errs["trace"], _fd_relative_error(lambda x: prob.crb_term(x, l)[0], m, grad, m))
        _, dlog = prob.log_term(m)
        errs["log"] = max(errs["log"], _fd_relative_error(lambda x: np.sum(prob.log_term(x)[0]), m, dlog, m))
        # h: derivative in m_new, and tangency with the true log term at the anchor
        jj, nn = rng.integers(prob.n_ru), rng.integers(prob.n_nodes)
        sigma_u, sx0 = all_circle_geometry(s)[l].gain_std_upper[jj], prob.sx[nn]
        k = sigma_u**2 * sx0
        a, x0 = anchor_m[jj, nn], m[jj, nn]
        slope = k / (LN2 * (1 + k * a))
        step = 1e-6 * x0
        fd_h = (linearized_rate_term(x0 + step, a, sx0, sigma_u) - linearized_rate_term(x0 - step, a, sx0, sigma_u)) / (2 * step)
        fd_true = (math.log2(1 + k * a * (1 + 1e-6)) - math.log2(1 + k * a * (1 - 1e-6))) / (2e-6 * a)
        errs["h"] = max(errs["h"], abs(fd_h - slope) / slope, abs(fd_true - slope) / slope)
        _, g_grad = prob.rate_constraint(m, anchor_m)
        j = points % prob.n_ru
        # g_lj depends on row j of m only
        mask = np.arange(prob.n_ru)[:, None] == j
        errs["rate"] = max(
            errs["rate"],
            _fd_relative_error(lambda x: prob.rate_constraint(x, anchor_m)[0][l, j], m, g_grad[l] * mask, m),
        )
    worst = max(errs.values())
    ok = verdict(6, worst < 1e-5, "max relative FD error over 100 points: " + ", ".join(f"{k} {v:.2g}" for k, v in errs.items()))
    assert ok


def test_c07_capacity_sweep(fig3_sweep, verdict):
    rows = sorted(fig3_sweep.rows, key=lambda r: r.capacity)
    prop = np.array([r.proposed for r in rows])
    base = np.array([r.baseline for r in rows])
    mono = bool(np.all(np.diff(prop) <= 0) and np.all(np.diff(base) <= 0))
    dominance = bool(np.all(prop <= base))
    low = rows[0]
    window = 1.5 <= low.proposed <= 5.0 and 5.0 <= low.baseline <= 14.0
    table = "; ".join(f"C={r.capacity:g}: {r.proposed:.3f}/{r.baseline:.3f} m" for r in rows)
    ok = verdict(7, mono and dominance and window, f"proposed/baseline {table} (monotone={mono}, dominance={dominance}, C=0.1 window={window})")
    assert ok


def test_c08_psd_follows_noise(fig3_sweep, fig3, verdict):
    design, _ = fig3_sweep.designs[5.0]
    _, sz = scenario_spectra(fig3, design.grid)
    rho = [stats.spearmanr(design.sq[j], sz[j]).statistic for j in range(3)]
    ok = verdict(8, all(r > 0.8 for r in rho), "Spearman(S_q, S_z) for RUs 1-3: " + ", ".join(f"{r:.4f}" for r in rho))
    assert ok


def test_c09_charnes_cooper_round_trip(verdict):
    rng = np.random.default_rng(9)
    worst_rt = worst_cp = 0.0
    grid = make_grid(1e6, 20)
    for _ in range(1000):
        sz = 10.0 ** rng.uniform(-20, 0, (2, grid.n_nodes))
        sq = 10.0 ** rng.uniform(-20, 0, (2, grid.n_nodes))
        m, n = charnes_cooper_forward(sq, sz)
        back = recover_sq(DcState(0, m, n, 0.0, sz, grid)).sq
        worst_rt = max(worst_rt, float(np.max(np.abs(back - sq) / sq)))
        worst_cp = max(worst_cp, float(np.max(np.abs(sz * m + n - 1.0))))
    ok = verdict(9, worst_rt <= 1e-12 and worst_cp <= 1e-12, f"round trip {worst_rt:.2g}, coupling {worst_cp:.2g} over 1000 cases")
    assert ok


def test_c10_equiangular_and_inverse_oracle(verdict):
    from fronthaul_crb.scenario import scenario_from_dict

    r = 150.0
    ru = [[r * math.cos(a), r * math.sin(a)] for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)]
    s = scenario_from_dict(white_document(ru_positions=ru, circles=[{"center": [0.0, 0.0], "radius": 10.0}]))
    grid = scenario_grid(s)
    q = QuantizerDesign.white(grid, np.ones(3))
    j = efim([0.0, 2 * math.pi / 3, 4 * math.pi / 3], np.ones(3), q, s, grid)
    iso = abs(j.b) / j.a + abs(j.c - j.a) / j.a

    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(1000):
        # eigenvalues spread over two decades, random orientation
        lam = 10.0 ** rng.uniform(-1, 1, 2)
        th = rng.uniform(0, np.pi)
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        mat = rot @ np.diag(lam) @ rot.T
        a, b, c = Fraction(mat[0, 0]), Fraction(0.5 * (mat[0, 1] + mat[1, 0])), Fraction(mat[1, 1])
        # brute force: adjugate over determinant in exact arithmetic
        inv = [[c / (a * c - b * b), -b / (a * c - b * b)], [-b / (a * c - b * b), a / (a * c - b * b)]]
        exact = float(inv[0][0] + inv[1][1])
        worst = max(worst, abs(crb_trace(SymMat2.from_array(mat)) - exact) / exact)
    ok = verdict(10, iso <= 1e-12 and worst <= 1e-12, f"equiangular off-isotropy {iso:.2g}; max rel error vs exact inverse {worst:.2g}")
    assert ok
