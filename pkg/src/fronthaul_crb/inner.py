"""Convex subproblem of the DC iteration and its log-barrier Newton solver.

The transformed variables m_j(f_n) are handled internally in the normalized
form u = S_z m, which lies in [0, 1) and equals 1 - n. Everything the
subproblem needs is linear or separable in u:

    Q_l(u)  = sum_{j,n} u_{jn} kappa_{ljn} Q_phi(phi_j^l, eps_j^l)
    g_lj(u) = (2/N_f) sum_n [h_ljn(u_{jn}) - log2(1 - u_{jn})]

where h is the tangent of log2(1 + s u) at the anchor. The solver minimizes
t subject to tr(Q_l^-1) <= t, Q_l > 0 and g_lj <= C_j.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import RelaxationInapplicableError, SolverError, UnlocalizableError
from .scenario import CircleGeometry, Scenario, all_circle_geometry
from .spectra import FrequencyGrid, scenario_grid, scenario_spectra

log = logging.getLogger(__name__)

LN2 = np.log(2.0)

# d/dx of Q for x in (a, b, c) of [[a, b], [b, c]]
_BASIS = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]])


@dataclass
class SolverOptions:
    delta_th: float = 1e-5
    max_outer: int = 100
    kkt_tol: float = 1e-9
    barrier_init: float = 1.0
    barrier_reduction: float = 0.2
    feasibility_slack: float = 1e-3
    init_margin: float = 1.01
    max_newton: int = 100
    newton_tol: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("delta_th", "max_outer", "kkt_tol", "barrier_init", "feasibility_slack", "max_newton", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.barrier_reduction < 1.0:
            raise ValueError("barrier_reduction must lie in (0, 1)")
        if not 0.0 < self.feasibility_slack < 1.0:
            raise ValueError("feasibility_slack must lie in (0, 1)")
        if not self.init_margin > 1.0:
            raise ValueError("init_margin must exceed 1")


def _q_terms(q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-circle derivatives of tr(Q^-1) and log det Q w.r.t. (a, b, c).

    Returns trace gradient (L, 3), trace Hessian (L, 3, 3), log-det gradient
    (L, 3), negative log-det Hessian (L, 3, 3) and the determinants.
    """
    a, b, c = q[:, 0], q[:, 1], q[:, 2]
    det = a * c - b * b
    inv = np.empty((len(q), 2, 2))
    inv[:, 0, 0] = c / det
    inv[:, 1, 1] = a / det
    inv[:, 0, 1] = inv[:, 1, 0] = -b / det
    d2 = det * det
    g_tr = np.column_stack([-(b * b + c * c) / d2, 2.0 * b * (a + c) / d2, -(a * a + b * b) / d2])
    g_ld = np.column_stack([c / det, -2.0 * b / det, a / det])
    p = np.einsum("lab,ibc->liac", inv, _BASIS)  # Q^-1 E_i
    h_nld = np.einsum("liab,lkba->lik", p, p)
    x = np.einsum("liab,lkbc,lca->lik", p, p, inv)
    h_tr = x + np.swapaxes(x, 1, 2)
    return g_tr, h_tr, g_ld, h_nld, det


class RobustProblem:
    """Scenario data arranged for the transformed robust design problem."""

    def __init__(
        self,
        s: Scenario,
        grid: FrequencyGrid | None = None,
        geometries: list[CircleGeometry] | None = None,
    ):
        self.scenario = s
        self.grid = grid or scenario_grid(s)
        self.geometries = geometries or all_circle_geometry(s)
        self.sx, self.sz = scenario_spectra(s, self.grid)
        self.n_circles = len(self.geometries)
        self.n_ru, self.n_nodes = self.sz.shape
        self.size = self.n_ru * self.n_nodes
        self.capacity = np.asarray(s.fronthaul_capacity, dtype=float)
        self.wn = self.grid.normalized_weight

        f2 = self.grid.nodes ** 2
        base = (8.0 * np.pi**2 / s.propagation_speed**2) * self.grid.integral_weight * f2 * self.sx
        sig_l2 = np.stack([g.gain_std_lower**2 for g in self.geometries])
        sig_u2 = np.stack([g.gain_std_upper**2 for g in self.geometries])
        self.info_m = sig_l2[:, :, None] * base  # (L, J, N) coefficient of m in Q
        info_u = self.info_m / self.sz
        phi = np.stack([g.nominal_angle for g in self.geometries])
        se = np.sin(np.stack([g.angular_uncertainty for g in self.geometries]))
        cos, sin = np.cos(phi), np.sin(phi)
        relaxed = np.stack([cos * cos - se, cos * sin, sin * sin - se], axis=1)  # (L, 3, J)
        exact = np.stack([cos * cos, cos * sin, sin * sin], axis=1)
        self.lin = (relaxed[..., None] * info_u[:, None]).reshape(self.n_circles, 3, self.size)
        self.lin_exact = (exact[..., None] * info_u[:, None]).reshape(self.n_circles, 3, self.size)
        # sigma_U^2 S_x m = snr_u * u
        self.snr_u = sig_u2[:, :, None] * self.sx / self.sz

    # --- conversions -------------------------------------------------------
    def to_u(self, m: np.ndarray) -> np.ndarray:
        return np.asarray(m, dtype=float) * self.sz

    def to_m(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) / self.sz

    # --- constraint functions (normalized coordinates) ---------------------
    def q_entries(self, u: np.ndarray, exact: bool = False) -> np.ndarray:
        lin = self.lin_exact if exact else self.lin
        return lin @ np.ravel(u)

    def crb_values(self, u: np.ndarray) -> np.ndarray:
        """tr(Q_l^-1) per circle; +inf where Q_l is not positive definite."""
        q = self.q_entries(u)
        a, b, c = q.T
        det = a * c - b * b
        ok = (a > 0) & (det > 0)
        out = np.full(self.n_circles, np.inf)
        out[ok] = (a[ok] + c[ok]) / det[ok]
        return out

    def true_rates(self, u: np.ndarray) -> np.ndarray:
        """Jensen-bounded fronthaul rate per (circle, RU) at the upper gain bound."""
        u = np.asarray(u)
        return self.wn * np.sum(np.log2(1.0 + self.snr_u * u) - np.log2(1.0 - u), axis=-1)

    def linearization(self, anchor_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Slope (L, J, N) and constant (L, J) of the linearized concave rate part, band weight included."""
        s = self.snr_u
        sa = s * anchor_u
        slope = self.wn * s / (LN2 * (1.0 + sa))
        const = self.wn * np.sum(np.log2(1.0 + sa), axis=-1) - np.sum(slope * anchor_u, axis=-1)
        return slope, const

    def linearized_rates(self, u: np.ndarray, anchor_u: np.ndarray) -> np.ndarray:
        slope, const = self.linearization(anchor_u)
        return const + np.sum(slope * u, axis=-1) - self.wn * np.sum(np.log2(1.0 - u), axis=-1)

    # --- the same functions in the untransformed m variables, with gradients -
    def crb_term(self, m: np.ndarray, l: int) -> tuple[float, np.ndarray]:
        """tr(Q_l(m)^-1) and its gradient w.r.t. m."""
        q = self.q_entries(self.to_u(m))[l : l + 1]
        g_tr, *_ = _q_terms(q)
        a, b, c = q[0]
        val = (a + c) / (a * c - b * b)
        grad = (self.lin[l].T @ g_tr[0]).reshape(self.n_ru, self.n_nodes) * self.sz
        return float(val), grad

    def log_term(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """-log2(1 - S_z m) per node and its elementwise derivative."""
        u = self.to_u(m)
        return -np.log2(1.0 - u), self.sz / (LN2 * (1.0 - u))

    def rate_constraint(self, m: np.ndarray, anchor_m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Linearized rate g_lj(m) (L, J) and its gradient w.r.t. m (L, J, N)."""
        u, a = self.to_u(m), self.to_u(anchor_m)
        slope, _ = self.linearization(a)
        grad = (slope + self.wn / (LN2 * (1.0 - u))) * self.sz
        return self.linearized_rates(u, a), grad


def linearized_rate_term(m_new, m_anchor, sx, sigma_u: float):
    """First-order expansion of log2(1 + sigma_U^2 S_x m) around m_anchor, evaluated at m_new."""
    k = sigma_u**2 * np.asarray(sx)
    base = 1.0 + k * np.asarray(m_anchor)
    return np.log2(base) + k / (LN2 * base) * (np.asarray(m_new) - np.asarray(m_anchor))


class _Point:
    __slots__ = ("x", "u", "xi", "tau", "q", "crb", "lmi", "lmi_det", "psi", "rate_slack")


# 4x4 block-matrix derivatives for the local parameters (xi_a, xi_b, xi_c, a, b, c)
_LMI_BASIS = np.zeros((6, 4, 4))
_LMI_BASIS[:3, :2, :2] = _BASIS
_LMI_BASIS[3:, 2:, 2:] = _BASIS


class _BarrierSolver:
    """Primal log-barrier method for one linearized subproblem.

    tr(Q_l^-1) <= t is lifted to [[X_l, I], [I, Q_l]] >= 0 with tr X_l <= t.
    The log-det barrier of that block is self-concordant, while
    -log(t - tr Q^-1) is not and makes Newton crawl along the boundary at
    small fronthaul budgets. Positive definiteness of the block implies
    Q_l > 0, so no separate cone barrier is needed.

    Variables are x = (u, xi, tau) with X_l = ts * Xi_l and t = ts * tau.
    """

    def __init__(self, prob: RobustProblem, anchor_u: np.ndarray, t_scale: float, opts: SolverOptions):
        self.p = prob
        self.opts = opts
        self.ts = t_scale
        self.slope, self.const = prob.linearization(anchor_u)
        L, J, K = prob.n_circles, prob.n_ru, prob.size
        # log-barrier degree: 4x4 block + epigraph per circle, rates, two bounds per variable
        self.degree = 5 * L + L * J + 2 * K
        self.lin_t = np.ascontiguousarray(np.swapaxes(prob.lin, 1, 2))  # (L, K, 3)

    def _split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        p = self.p
        k = p.size
        return x[:k].reshape(p.n_ru, p.n_nodes), x[k:-1].reshape(p.n_circles, 3), x[-1]

    def point(self, x: np.ndarray) -> _Point | None:
        p = self.p
        u, xi, tau = self._split(x)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            return None
        psi = tau - xi[:, 0] - xi[:, 2]
        if np.any(psi <= 0.0):
            return None
        q = p.lin @ x[: p.size]
        blocks = np.einsum("li,iab->lab", np.column_stack([xi, self.ts * q]), _LMI_BASIS)
        blocks[:, 0, 2] = blocks[:, 2, 0] = blocks[:, 1, 3] = blocks[:, 3, 1] = 1.0
        sign, logdet = np.linalg.slogdet(blocks)
        if np.any(sign <= 0):
            return None
        try:
            np.linalg.cholesky(blocks)
        except np.linalg.LinAlgError:
            return None
        g = self.const + np.einsum("ljn,jn->lj", self.slope, u) - p.wn * np.sum(np.log2(1.0 - u), axis=-1)
        slack = p.capacity - g
        if np.any(slack <= 0.0):
            return None
        a, b, c = q.T
        pt = _Point()
        pt.x, pt.u, pt.xi, pt.tau, pt.q = x, u, xi, tau, q
        pt.crb = (a + c) / (a * c - b * b)
        pt.lmi, pt.lmi_det, pt.psi, pt.rate_slack = blocks, logdet, psi, slack
        return pt

    def diff(self, p0: _Point, p1: _Point, w: float) -> float:
        """F(p1) - F(p0), computed from ratios to limit cancellation."""
        return (
            w * (p1.tau - p0.tau)
            - np.sum(np.log(p1.psi / p0.psi))
            - np.sum(p1.lmi_det - p0.lmi_det)
            - np.sum(np.log(p1.rate_slack / p0.rate_slack))
            - np.sum(np.log(p1.u / p0.u))
            - np.sum(np.log((1.0 - p1.u) / (1.0 - p0.u)))
        )

    def grad_hess(self, pt: _Point, w: float) -> tuple[np.ndarray, np.ndarray]:
        p = self.p
        L, J, N, K = p.n_circles, p.n_ru, p.n_nodes, p.size
        n = K + 3 * L + 1
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        huu = hess[:K, :K]

        # -log det of the block: gradient -tr(M^-1 A_i), Hessian tr(M^-1 A_i M^-1 A_k)
        inv = np.linalg.inv(pt.lmi)
        pa = np.einsum("lab,ibc->liac", inv, _LMI_BASIS)
        g6 = -np.einsum("liaa->li", pa)
        h6 = np.einsum("liab,lkba->lik", pa, pa)
        g6[:, 3:] *= self.ts
        h6[:, 3:, :] *= self.ts
        h6[:, :, 3:] *= self.ts
        inv_psi = 1.0 / pt.psi
        tr_vec = np.array([1.0, 0.0, 1.0])
        for l in range(L):
            lt = self.lin_t[l]
            xs = slice(K + 3 * l, K + 3 * l + 3)
            grad[:K] += lt @ g6[l, 3:]
            grad[xs] += g6[l, :3] + inv_psi[l] * tr_vec
            huu += lt @ h6[l, 3:, 3:] @ lt.T
            cross = lt @ h6[l, 3:, :3]
            hess[:K, xs] += cross
            hess[xs, :K] += cross.T
            v = inv_psi[l] * tr_vec
            hess[xs, xs] += h6[l, :3, :3] + np.outer(v, v)
            hess[xs, -1] -= v * inv_psi[l]
            hess[-1, xs] -= v * inv_psi[l]
        grad[-1] = w - np.sum(inv_psi)
        hess[-1, -1] = np.sum(inv_psi**2)

        u = pt.u
        inv_r = 1.0 / pt.rate_slack  # (L, J)
        dg = self.slope + p.wn / (LN2 * (1.0 - u))  # (L, J, N)
        grad[:K] += np.einsum("ljn,lj->jn", dg, inv_r).ravel()
        scaled = dg * inv_r[..., None]
        blocks = np.einsum("ljn,ljm->jnm", scaled, scaled)
        curv = (p.wn / LN2) / (1.0 - u) ** 2 * np.sum(inv_r, axis=0)[:, None]
        for j in range(J):
            sl = slice(j * N, (j + 1) * N)
            huu[sl, sl] += blocks[j]
        uf = u.ravel()
        grad[:K] += -1.0 / uf + 1.0 / (1.0 - uf)
        diag = curv.ravel() + 1.0 / uf**2 + 1.0 / (1.0 - uf) ** 2
        huu[np.diag_indices(K)] += diag
        return grad, hess

    @staticmethod
    def newton_direction(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
        d = np.sqrt(np.diag(hess))
        scaled = hess / d[:, None] / d[None, :]
        rhs = -grad / d
        try:
            y = linalg.cho_solve(linalg.cho_factor(scaled, check_finite=False), rhs, check_finite=False)
        except linalg.LinAlgError:
            scaled[np.diag_indices_from(scaled)] += 1e-10
            y = linalg.solve(scaled, rhs, assume_a="sym", check_finite=False)
        return y / d

    def max_step(self, x: np.ndarray, dx: np.ndarray) -> float:
        k = self.p.size
        u, du = x[:k], dx[:k]
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(du < 0, -u / du, np.inf)
            hi = np.where(du > 0, (1.0 - u) / du, np.inf)
        return float(min(1.0, 0.99 * min(lo.min(), hi.min())))

    def center(self, pt: _Point, w: float) -> tuple[_Point, int]:
        opts = self.opts
        prev = np.inf
        for it in range(opts.max_newton):
            grad, hess = self.grad_hess(pt, w)
            dx = self.newton_direction(grad, hess)
            dec = -float(grad @ dx)
            if dec < 0:
                raise SolverError("Newton direction is not a descent direction")
            # below 1e-4 a non-decreasing decrement means rounding noise, not progress
            if 0.5 * dec <= opts.newton_tol or (dec < 1e-4 and dec >= prev):
                return pt, it
            prev = dec
            step = self.max_step(pt.x, dx)
            while True:
                cand = self.point(pt.x + step * dx)
                if cand is not None:
                    if dec < 1e-2 or self.diff(pt, cand, w) <= -0.01 * step * dec:
                        break
                step *= 0.5
                if step < 1e-14:
                    log.debug("line search stalled (decrement %.3g)", dec)
                    return pt, it
            pt = cand
        log.debug("centering hit the Newton limit (w=%.3g)", w)
        return pt, opts.max_newton

    def start_point(self, start_u: np.ndarray) -> _Point:
        slack = self.opts.feasibility_slack
        q = self.p.q_entries(start_u)
        a, b, c = q.T
        det = a * c - b * b
        # X slightly above Q^-1, t slightly above tr X
        xi = np.column_stack([c, -b, a]) / det[:, None] / self.ts * (1.0 + slack)
        xi[:, 0] += slack
        xi[:, 2] += slack
        tau = float(np.max(xi[:, 0] + xi[:, 2])) * (1.0 + slack) + slack
        pt = self.point(np.concatenate([np.ravel(start_u), xi.ravel(), [tau]]))
        if pt is None:
            raise SolverError("starting point is not strictly feasible")
        return pt

    def solve(self, start_u: np.ndarray) -> tuple[np.ndarray, float, int]:
        opts = self.opts
        pt = self.start_point(start_u)
        w = 1.0 / opts.barrier_init
        newton_total = 0
        while True:
            pt, n_it = self.center(pt, w)
            newton_total += n_it
            if self.degree / w * self.ts <= opts.kkt_tol:
                break
            w /= opts.barrier_reduction
        return pt.u.copy(), float(np.max(pt.crb)), newton_total


def check_localizable(prob: RobustProblem, u: np.ndarray) -> None:
    """Raise if the worst-case relaxation matrix is not positive definite at u."""
    crb = prob.crb_values(u)
    if np.all(np.isfinite(crb)):
        return
    q = prob.q_entries(u, exact=True)
    a, b, c = q.T
    if np.any((a <= 0) | (a * c - b * b <= 1e-14 * (a + c) ** 2)):
        raise UnlocalizableError("unlocalizable configuration: information matrix is singular")
    bad = [int(l) for l in np.flatnonzero(~np.isfinite(crb))]
    raise RelaxationInapplicableError(
        f"relaxation bound inapplicable: relaxation matrix not positive definite for circles {bad}"
    )


def solve_inner_normalized(
    prob: RobustProblem, anchor_u: np.ndarray, opts: SolverOptions
) -> tuple[np.ndarray, float, int]:
    """One DC step in normalized coordinates; returns (u, objective, newton steps)."""
    anchor_u = np.asarray(anchor_u, dtype=float)
    if np.any(anchor_u < 0) or np.any(anchor_u >= 1):
        raise SolverError("anchor outside the transform range 0 <= S_z m < 1")
    rates = prob.linearized_rates(anchor_u, anchor_u)
    if np.any(rates > prob.capacity[None, :] * (1 + 1e-12)):
        raise SolverError("anchor violates its own linearized rate constraints")
    start = np.maximum(anchor_u, 1e-12) * (1.0 - opts.feasibility_slack)
    check_localizable(prob, start)
    t_scale = float(np.max(prob.crb_values(start)))
    solver = _BarrierSolver(prob, anchor_u, t_scale, opts)
    return solver.solve(start)


def solve_inner(
    anchor_m: np.ndarray,
    s: Scenario,
    geometries: list[CircleGeometry] | None = None,
    grid: FrequencyGrid | None = None,
    opts: SolverOptions | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the convex subproblem linearized at anchor_m; returns (m, n, t)."""
    prob = RobustProblem(s, grid, geometries)
    u, t, _ = solve_inner_normalized(prob, prob.to_u(anchor_m), opts or SolverOptions())
    return prob.to_m(u), 1.0 - u, t
