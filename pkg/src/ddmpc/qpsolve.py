"""Dense convex quadratic programming with equality and box constraints.

Problems have the form

    minimize    0.5 z' H z + f' z
    subject to  A_eq z = b_eq,  lower <= z <= upper

with H symmetric positive semidefinite. The solver is an operator-splitting
(ADMM) iteration in the OSQP family: Ruiz equilibration, one cached matrix
factorization per problem structure, over-relaxed iterates with per-row step
sizes, and an active-set polish step that refines the accepted iterate to
near machine precision. A direct saddle-point path handles equality-only
problems. ``PreparedQp`` keeps the factorization alive across solves whose
(H, A_eq, bounds) do not change, which is the receding-horizon use case.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.optimize


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    MAX_ITERATIONS = "max_iterations"


class QpSolveError(Exception):
    """Base class for solver errors."""


class SingularKktError(QpSolveError):
    """Raised when a direct KKT solve meets a singular or inconsistent
    system. ``rank_defect`` is the dimension gap of the KKT matrix."""

    def __init__(self, message: str, rank_defect: int):
        super().__init__(message)
        self.rank_defect = rank_defect


def _as_bound(value, nz: int, default: float) -> np.ndarray:
    if value is None:
        return np.full(nz, default)
    b = np.asarray(value, dtype=float).reshape(-1)
    if b.shape != (nz,):
        raise ValueError(f"bound has shape {b.shape}, expected ({nz},)")
    return b


@dataclass
class QpProblem:
    """Dense QP data. H is symmetrized on construction; bounds default to
    the unconstrained box."""

    H: np.ndarray
    f: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.H.shape[0] != self.H.shape[1]:
            raise ValueError(f"H must be square, got shape {self.H.shape}")
        self.H = 0.5 * (self.H + self.H.T)
        nz = self.H.shape[0]
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        if self.f.shape != (nz,):
            raise ValueError(f"f has shape {self.f.shape}, expected ({nz},)")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, nz))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.asarray(self.A_eq, dtype=float)
            if self.A_eq.ndim != 2 or self.A_eq.shape[1] != nz:
                raise ValueError(
                    f"A_eq has shape {self.A_eq.shape}, expected (*, {nz})")
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
            if self.b_eq.shape != (self.A_eq.shape[0],):
                raise ValueError("b_eq length does not match A_eq rows")
        self.lower = _as_bound(self.lower, nz, -np.inf)
        self.upper = _as_bound(self.upper, nz, np.inf)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_vars(self) -> int:
        return self.H.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.H @ z + self.f @ z)


@dataclass(frozen=True)
class QpSettings:
    """Solver tolerances and ADMM parameters. The defaults target the MPC
    problems in this package; ``regularization`` is the ridge added to H in
    direct KKT solves so PSD-only Hessians stay factorizable."""

    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iter: int = 20000
    regularization: float = 1e-10
    rho: float = 0.1
    sigma: float = 1e-6
    over_relaxation: float = 1.6
    eq_rho_scale: float = 1e3
    scaling_iters: int = 10
    check_interval: int = 25
    adaptive_rho: bool = True
    polish: bool = True
    infeas_tol: float = 1e-6


@dataclass
class QpSolution:
    z_star: np.ndarray
    eq_multipliers: np.ndarray
    box_multipliers: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float = np.nan
    polished: bool = False


@dataclass(frozen=True)
class KktReport:
    """Independent KKT residuals for a candidate primal-dual point.

    Computed directly from the problem data, not from solver state, so the
    report can serve as an oracle for the solver itself. ``comp_slack``
    uses |mu_i| itself when the nominally active bound is infinite (a
    nonzero multiplier on a missing bound is a dual infeasibility).
    """

    stationarity: float
    primal_eq: float
    box_violation: float
    comp_slack: float
    scale: float

    def ok(self, tol: float) -> bool:
        bound = tol * self.scale
        return (self.stationarity <= bound and self.primal_eq <= bound
                and self.box_violation <= bound and self.comp_slack <= bound)


def kkt_report(problem: QpProblem, z: np.ndarray,
               eq_multipliers: Optional[np.ndarray] = None,
               box_multipliers: Optional[np.ndarray] = None) -> KktReport:
    """Evaluate KKT residuals of (z, lambda, mu) for ``problem``.

    ``box_multipliers`` follows the signed convention mu = mu_upper -
    mu_lower: positive entries claim an active upper bound, negative an
    active lower bound.
    """
    lam = np.zeros(problem.A_eq.shape[0]) if eq_multipliers is None \
        else np.asarray(eq_multipliers, dtype=float)
    mu = np.zeros(problem.n_vars) if box_multipliers is None \
        else np.asarray(box_multipliers, dtype=float)

    grad = problem.H @ z + problem.f + problem.A_eq.T @ lam + mu
    stationarity = float(np.max(np.abs(grad))) if grad.size else 0.0

    if problem.A_eq.shape[0]:
        primal_eq = float(np.max(np.abs(problem.A_eq @ z - problem.b_eq)))
    else:
        primal_eq = 0.0

    box_violation = float(max(
        np.max(problem.lower - z, initial=0.0),
        np.max(z - problem.upper, initial=0.0)))

    comp = 0.0
    for i in range(problem.n_vars):
        if mu[i] > 0.0:
            gap = problem.upper[i] - z[i]
            comp = max(comp, mu[i] * gap if np.isfinite(gap) else mu[i])
        elif mu[i] < 0.0:
            gap = z[i] - problem.lower[i]
            comp = max(comp, -mu[i] * gap if np.isfinite(gap) else -mu[i])

    scale = 1.0 + max(
        float(np.max(np.abs(problem.H @ z), initial=0.0)),
        float(np.max(np.abs(problem.f), initial=0.0)),
        float(np.max(np.abs(z), initial=0.0)),
        float(np.max(np.abs(mu), initial=0.0)))
    return KktReport(stationarity, primal_eq, box_violation, abs(comp), scale)


def duality_gap(problem: QpProblem, solution: QpSolution) -> float:
    """|primal - dual| objective gap at the solution's primal-dual point.

    Infinite bounds with zero multipliers contribute nothing; the 0 * inf
    products are masked away.
    """
    z = solution.z_star
    primal = problem.objective(z)
    mu_up = np.maximum(solution.box_multipliers, 0.0)
    mu_lo = np.maximum(-solution.box_multipliers, 0.0)
    # dual objective: -(1/2) z'Hz - b'lam - u'mu_up + l'mu_lo with the
    # stationarity convention Hz + f + A_eq'lam + mu = 0
    dual = -0.5 * float(z @ problem.H @ z)
    if problem.b_eq.size:
        dual -= float(problem.b_eq @ solution.eq_multipliers)
    up_mask = mu_up > 0
    lo_mask = mu_lo > 0
    dual -= float(problem.upper[up_mask] @ mu_up[up_mask])
    dual += float(problem.lower[lo_mask] @ mu_lo[lo_mask])
    return abs(primal - dual)


def _ruiz_equilibration(H, A, f, iters):
    """Modified Ruiz scaling of the stacked KKT block matrix.

    Returns (c, d, e): cost scale and diagonal vectors so the scaled data
    are H' = c * D H D, f' = c * D f, A' = E A D.
    """
    n = H.shape[0]
    m = A.shape[0]
    c = 1.0
    d = np.ones(n)
    e = np.ones(m)
    for _ in range(iters):
        Hs = c * (d[:, None] * H * d[None, :])
        As = e[:, None] * A * d[None, :] if m else np.zeros((0, n))
        col_h = np.max(np.abs(Hs), axis=0, initial=0.0)
        col_a = np.max(np.abs(As), axis=0, initial=0.0) if m \
            else np.zeros(n)
        norm_x = np.maximum(col_h, col_a)
        norm_z = np.max(np.abs(As), axis=1, initial=0.0) if m \
            else np.zeros(0)
        delta_x = np.where(norm_x > 1e-12, 1.0 / np.sqrt(norm_x), 1.0)
        delta_z = np.where(norm_z > 1e-12, 1.0 / np.sqrt(norm_z), 1.0)
        d *= delta_x
        e *= delta_z
        # cost normalization
        Hs = c * (d[:, None] * H * d[None, :])
        mean_col = float(np.mean(np.max(np.abs(Hs), axis=0, initial=0.0))) \
            if n else 0.0
        fnorm = float(np.max(np.abs(c * d * f), initial=0.0))
        denom = max(mean_col, fnorm)
        if denom > 1e-12:
            c *= 1.0 / denom
    return c, d, e


def _refined_solve(K_reg_lu, K_true, rhs, refine_steps=2):
    sol = scipy.linalg.lu_solve(K_reg_lu, rhs)
    for _ in range(refine_steps):
        resid = rhs - K_true @ sol
        sol = sol + scipy.linalg.lu_solve(K_reg_lu, resid)
    return sol


class PreparedQp:
    """Solver workspace bound to a fixed (H, A_eq, lower, upper) structure.

    The equilibration and the ADMM matrix factorization are computed once;
    subsequent :meth:`solve` calls only ship new linear terms (f, b_eq).
    Instances are single-owner: reuse them sequentially, never concurrently.
    """

    def __init__(self, H, A_eq=None, lower=None, upper=None,
                 settings: Optional[QpSettings] = None):
        self.settings = settings or QpSettings()
        H = np.asarray(H, dtype=float)
        self.n = H.shape[0]
        self.H = 0.5 * (H + H.T)
        self.A_eq = np.zeros((0, self.n)) if A_eq is None \
            else np.asarray(A_eq, dtype=float)
        self.n_eq = self.A_eq.shape[0]
        self.lower = _as_bound(lower, self.n, -np.inf)
        self.upper = _as_bound(upper, self.n, np.inf)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

        # constraint rows: equalities first, then one row per variable that
        # carries a finite bound
        self.box_idx = np.flatnonzero(
            np.isfinite(self.lower) | np.isfinite(self.upper))
        n_box = self.box_idx.size
        self.m_rows = self.n_eq + n_box
        self.A = np.zeros((self.m_rows, self.n))
        if self.n_eq:
            self.A[:self.n_eq] = self.A_eq
        self.A[self.n_eq + np.arange(n_box), self.box_idx] = 1.0

        self.l_full = np.concatenate(
            [np.zeros(self.n_eq), self.lower[self.box_idx]])
        self.u_full = np.concatenate(
            [np.zeros(self.n_eq), self.upper[self.box_idx]])
        self.eq_rows = np.zeros(self.m_rows, dtype=bool)
        self.eq_rows[:self.n_eq] = True
        self.eq_rows[self.n_eq:] = np.isclose(
            self.lower[self.box_idx], self.upper[self.box_idx])

        self.c, self.d, self.e = _ruiz_equilibration(
            self.H, self.A, np.zeros(self.n), self.settings.scaling_iters)
        self.Hs = self.c * (self.d[:, None] * self.H * self.d[None, :])
        self.As = self.e[:, None] * self.A * self.d[None, :] \
            if self.m_rows else np.zeros((0, self.n))

        # with no box rows the problem is equality-constrained only and a
        # single saddle-point factorization solves it exactly; the ADMM
        # loop would add iteration error for nothing
        self._direct = n_box == 0 and self.n_eq > 0
        if self._direct:
            ne = self.n_eq
            K = np.zeros((self.n + ne, self.n + ne))
            K[:self.n, :self.n] = self.H
            K[:self.n, self.n:] = self.A_eq.T
            K[self.n:, :self.n] = self.A_eq
            delta = max(self.settings.regularization, 1e-12)
            K_reg = K.copy()
            K_reg[:self.n, :self.n] += delta * np.eye(self.n)
            K_reg[self.n:, self.n:] -= delta * np.eye(ne)
            self._saddle_true = K
            self._saddle_lu = scipy.linalg.lu_factor(K_reg)

        self._rho_bar = self.settings.rho
        self._set_rho_vector()
        self._factor()

    # -- linear algebra ----------------------------------------------------

    def _set_rho_vector(self):
        rho = np.full(self.m_rows, self._rho_bar)
        rho[self.eq_rows] = min(
            self._rho_bar * self.settings.eq_rho_scale, 1e9)
        self.rho = rho

    def _factor(self):
        sigma = self.settings.sigma
        M = self.Hs + sigma * np.eye(self.n)
        if self.m_rows:
            M = M + (self.As.T * self.rho) @ self.As
        try:
            self._chol = scipy.linalg.cho_factor(M, lower=True)
            self._lu = None
        except np.linalg.LinAlgError:
            K = np.zeros((self.n + self.m_rows, self.n + self.m_rows))
            K[:self.n, :self.n] = self.Hs + sigma * np.eye(self.n)
            if self.m_rows:
                K[:self.n, self.n:] = self.As.T
                K[self.n:, :self.n] = self.As
                K[self.n:, self.n:] = -np.diag(1.0 / self.rho)
            self._chol = None
            self._lu = scipy.linalg.lu_factor(K)

    def _kkt_solve(self, rhs1, rhs2):
        """Solve the ADMM step system; returns (x_tilde, nu)."""
        if self._chol is not None:
            b = rhs1 + self.As.T @ (self.rho * rhs2) if self.m_rows else rhs1
            x = scipy.linalg.cho_solve(self._chol, b)
            nu = self.rho * (self.As @ x - rhs2) if self.m_rows \
                else np.zeros(0)
            return x, nu
        sol = scipy.linalg.lu_solve(
            self._lu, np.concatenate([rhs1, rhs2]))
        return sol[:self.n], sol[self.n:]

    # -- main loop ---------------------------------------------------------

    def solve(self, f, b_eq=None,
              warm_start: Union[QpSolution, np.ndarray, None] = None
              ) -> QpSolution:
        s = self.settings
        f = np.asarray(f, dtype=float).reshape(-1)
        if f.shape != (self.n,):
            raise ValueError(f"f has shape {f.shape}, expected ({self.n},)")
        if self.n_eq:
            b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
            if b_eq.shape != (self.n_eq,):
                raise ValueError("b_eq length does not match A_eq rows")
            self.l_full[:self.n_eq] = b_eq
            self.u_full[:self.n_eq] = b_eq
        else:
            b_eq = np.zeros(0)

        problem = None  # built lazily for polish / reporting

        if self.m_rows == 0:
            return self._solve_unconstrained(f)
        if self._direct:
            return self._solve_direct(f, b_eq)

        fs = self.c * (self.d * f)
        ls = self.e * self.l_full
        us = self.e * self.u_full

        # iterates (scaled space)
        x = np.zeros(self.n)
        z = np.clip(np.zeros(self.m_rows), ls, us)
        y = np.zeros(self.m_rows)
        if warm_start is not None:
            if isinstance(warm_start, QpSolution):
                x0 = warm_start.z_star
                y0 = np.concatenate([
                    warm_start.eq_multipliers,
                    warm_start.box_multipliers[self.box_idx]])
                y = (self.c / self.e) * y0 if self.m_rows else y
            else:
                x0 = np.asarray(warm_start, dtype=float).reshape(-1)
            x = x0 / self.d
            z = np.clip(self.As @ x, ls, us)

        alpha = s.over_relaxation
        best = None
        iterations = 0
        strict_hit = False
        diverged = False
        failed_sigs: set = set()
        polish_budget = 16
        y_prev = y

        while iterations < s.max_iter:
            for _ in range(s.check_interval):
                # infeasible problems can blow the iterates up before the
                # certificate below gets a chance; bail out while the
                # numbers are still finite
                if np.max(np.abs(y), initial=0.0) > 1e30 \
                        or np.max(np.abs(x), initial=0.0) > 1e30 \
                        or np.max(np.abs(z), initial=0.0) > 1e30 \
                        or not (np.isfinite(y).all()
                                and np.isfinite(x).all()
                                and np.isfinite(z).all()):
                    diverged = True
                    break
                rhs1 = s.sigma * x - fs
                rhs2 = z - y / self.rho
                x_t, nu = self._kkt_solve(rhs1, rhs2)
                z_t = z + (nu - y) / self.rho
                x = alpha * x_t + (1.0 - alpha) * x
                z_pre = alpha * z_t + (1.0 - alpha) * z
                z_new = np.clip(z_pre + y / self.rho, ls, us)
                y_prev = y
                y = y + self.rho * (z_pre - z_new)
                z = z_new
                iterations += 1

            # unscaled residuals
            xu = np.nan_to_num(self.d * x, posinf=1e30, neginf=-1e30)
            zu = np.nan_to_num(z / self.e, posinf=1e30, neginf=-1e30)
            yu = np.nan_to_num((self.e * y) / self.c,
                               posinf=1e30, neginf=-1e30)
            Ax = self.A @ xu
            r_p = float(np.max(np.abs(Ax - zu), initial=0.0))
            Hx = self.H @ xu
            Aty = self.A.T @ yu
            r_d = float(np.max(np.abs(Hx + f + Aty), initial=0.0))
            p_scale = max(np.max(np.abs(Ax), initial=0.0),
                          np.max(np.abs(zu), initial=0.0))
            d_scale = max(np.max(np.abs(Hx), initial=0.0),
                          np.max(np.abs(f), initial=0.0),
                          np.max(np.abs(Aty), initial=0.0))
            eps_p = s.abs_tol + s.rel_tol * p_scale
            eps_d = s.abs_tol + s.rel_tol * d_scale

            if best is None or r_p + r_d < best[0]:
                best = (r_p + r_d, xu.copy(), yu.copy(), r_p, r_d)

            if r_p <= eps_p and r_d <= eps_d:
                strict_hit = True
                break

            # active-set rescue: ADMM converges slowly in the tail, but the
            # exact solution is one reduced KKT solve away once the active
            # set settles, and each candidate set is verified independently
            # before acceptance. Failed sets are memoized, so repeated
            # attempts cost one factorization per NEW candidate at most.
            loose_p = 1e-3 * (1.0 + p_scale)
            loose_d = 1e-3 * (1.0 + d_scale)
            if (s.polish and polish_budget > 0 and r_p <= loose_p
                    and r_d <= loose_d):
                if problem is None:
                    problem = QpProblem(self.H, f,
                                        self.A_eq if self.n_eq else None,
                                        b_eq if self.n_eq else None,
                                        self.lower, self.upper)
                polished, spent = self._polish(problem, f, b_eq, zu, yu,
                                               iterations, failed_sigs)
                polish_budget -= spent
                if polished is not None:
                    return polished

            # infeasibility certificate. Skipped while the iterate is
            # nearly feasible or the dual step is rounding noise, and a
            # validated direction still has to survive an independent
            # minimum-violation check before the problem is declared
            # infeasible: a spurious verdict here would abort a solvable
            # controller step.
            dy = (self.e * (y - y_prev)) / self.c
            dy_norm = float(np.max(np.abs(dy), initial=0.0))
            y_mag = float(np.max(np.abs(yu), initial=0.0))
            if r_p > s.infeas_tol and dy_norm > 1e-10 * (1.0 + y_mag):
                dyn = dy / dy_norm
                pos = dyn > 0
                neg = dyn < 0
                support_ok = not (np.any(pos & np.isinf(self.u_full))
                                  or np.any(neg & np.isinf(self.l_full)))
                if support_ok:
                    support = float(self.u_full[pos] @ dyn[pos]
                                    + self.l_full[neg] @ dyn[neg])
                else:
                    support = 0.0
                at_dy = float(np.max(np.abs(self.A.T @ dyn), initial=0.0))
                if support_ok and at_dy <= s.infeas_tol \
                        and support <= -s.infeas_tol \
                        and self._primal_feasibility_gap() > s.infeas_tol:
                    return QpSolution(
                        z_star=np.clip(xu, self.lower, self.upper),
                        eq_multipliers=yu[:self.n_eq],
                        box_multipliers=self._expand_mu(yu),
                        status=QpStatus.PRIMAL_INFEASIBLE,
                        iterations=iterations,
                        primal_residual=r_p, dual_residual=r_d,
                        objective=np.nan)

            if diverged:
                # the dual certificate did not validate the blowup; settle
                # it by minimizing the constraint violation directly
                gap = self._primal_feasibility_gap()
                if gap > s.infeas_tol:
                    return QpSolution(
                        z_star=np.clip(xu, self.lower, self.upper),
                        eq_multipliers=yu[:self.n_eq],
                        box_multipliers=self._expand_mu(yu),
                        status=QpStatus.PRIMAL_INFEASIBLE,
                        iterations=iterations,
                        primal_residual=gap, dual_residual=r_d,
                        objective=np.nan)
                break

            if s.adaptive_rho and iterations % (s.check_interval * 4) == 0:
                rp_rel = r_p / max(p_scale, 1e-10)
                rd_rel = r_d / max(d_scale, 1e-10)
                ratio = np.sqrt(rp_rel / max(rd_rel, 1e-16))
                if ratio > 5.0 or ratio < 0.2:
                    self._rho_bar = float(
                        np.clip(self._rho_bar * ratio, 1e-6, 1e6))
                    self._set_rho_vector()
                    self._factor()

        # assemble final result
        if problem is None:
            problem = QpProblem(self.H, f,
                                self.A_eq if self.n_eq else None,
                                b_eq if self.n_eq else None,
                                self.lower, self.upper)
        _, xu, yu, r_p, r_d = best
        if s.polish:
            zu = np.clip(self.A @ xu, self.l_full, self.u_full)
            polished, _ = self._polish(problem, f, b_eq, zu, yu, iterations,
                                       failed_sigs)
            if polished is not None:
                if strict_hit or polished.primal_residual + \
                        polished.dual_residual <= r_p + r_d:
                    return polished
        z_out = np.clip(xu, self.lower, self.upper)
        status = QpStatus.OPTIMAL if strict_hit else QpStatus.MAX_ITERATIONS
        return QpSolution(
            z_star=z_out,
            eq_multipliers=yu[:self.n_eq],
            box_multipliers=self._expand_mu(yu),
            status=status, iterations=iterations,
            primal_residual=r_p, dual_residual=r_d,
            objective=problem.objective(z_out))

    def _solve_direct(self, f, b_eq) -> QpSolution:
        """Exact saddle-point solve for the boxless equality-only case."""
        rhs = np.concatenate([-f, b_eq])
        sol = _refined_solve(self._saddle_lu, self._saddle_true, rhs,
                             refine_steps=3)
        ok, result = self._check_direct(sol, f, b_eq)
        if ok:
            return result
        # the regularized factorization did not resolve the system; a
        # least-squares solve handles the rank-deficient-but-consistent
        # case exactly
        sol, *_ = np.linalg.lstsq(self._saddle_true, rhs, rcond=None)
        ok, result = self._check_direct(sol, f, b_eq)
        if ok:
            return result
        ls, *_ = np.linalg.lstsq(self.A_eq, b_eq, rcond=None)
        ls_gap = float(np.max(np.abs(self.A_eq @ ls - b_eq), initial=0.0))
        if ls_gap > self.settings.infeas_tol:
            return QpSolution(
                z_star=ls, eq_multipliers=np.zeros(self.n_eq),
                box_multipliers=np.zeros(self.n),
                status=QpStatus.PRIMAL_INFEASIBLE, iterations=1,
                primal_residual=ls_gap, dual_residual=np.inf,
                objective=np.nan)
        return result

    def _check_direct(self, sol, f, b_eq):
        """Residual check for a saddle-point candidate; (ok, solution)."""
        z = sol[:self.n]
        lam = sol[self.n:]
        grad = self.H @ z + f + self.A_eq.T @ lam
        gap = self.A_eq @ z - b_eq
        r_d = float(np.max(np.abs(grad), initial=0.0))
        r_p = float(np.max(np.abs(gap), initial=0.0))
        p_scale = 1.0 + max(np.max(np.abs(b_eq), initial=0.0),
                            np.max(np.abs(self.A_eq @ z), initial=0.0))
        d_scale = 1.0 + max(np.max(np.abs(f), initial=0.0),
                            np.max(np.abs(self.H @ z), initial=0.0),
                            np.max(np.abs(self.A_eq.T @ lam), initial=0.0))
        ok = bool(np.all(np.isfinite(sol)) and r_p <= 1e-7 * p_scale
                  and r_d <= 1e-7 * d_scale)
        status = QpStatus.OPTIMAL if ok else QpStatus.MAX_ITERATIONS
        objective = float(0.5 * z @ self.H @ z + f @ z) \
            if np.all(np.isfinite(z)) else np.nan
        return ok, QpSolution(
            z_star=z, eq_multipliers=lam,
            box_multipliers=np.zeros(self.n), status=status, iterations=1,
            primal_residual=r_p, dual_residual=r_d, objective=objective)

    def _primal_feasibility_gap(self) -> float:
        """Smallest max-norm violation of {A z in [l, u]} over all z.

        Solved exactly as a linear program in (z, t): minimize t subject
        to l - t <= A z <= u + t. A positive optimum certifies primal
        infeasibility independently of the ADMM iteration.
        """
        A, l, u = self.A, self.l_full, self.u_full
        fin_u = np.isfinite(u)
        fin_l = np.isfinite(l)
        blocks = []
        rhs = []
        if fin_u.any():
            blocks.append(np.hstack([A[fin_u],
                                     -np.ones((int(fin_u.sum()), 1))]))
            rhs.append(u[fin_u])
        if fin_l.any():
            blocks.append(np.hstack([-A[fin_l],
                                     -np.ones((int(fin_l.sum()), 1))]))
            rhs.append(-l[fin_l])
        if not blocks:
            return 0.0
        c = np.zeros(self.n + 1)
        c[-1] = 1.0
        res = scipy.optimize.linprog(
            c, A_ub=np.vstack(blocks), b_ub=np.concatenate(rhs),
            bounds=[(None, None)] * self.n + [(0.0, None)],
            method="highs")
        # this LP is always feasible and bounded below by zero; an
        # abnormal solver exit must not manufacture a certificate
        return float(res.x[-1]) if res.status == 0 else 0.0

    def _expand_mu(self, y_unscaled: np.ndarray) -> np.ndarray:
        mu = np.zeros(self.n)
        if self.box_idx.size:
            mu[self.box_idx] = y_unscaled[self.n_eq:]
        return mu

    def _solve_unconstrained(self, f: np.ndarray) -> QpSolution:
        delta = self.settings.regularization
        H_reg = self.H + delta * np.eye(self.n)
        try:
            chol = scipy.linalg.cho_factor(H_reg, lower=True)
            z = scipy.linalg.cho_solve(chol, -f)
        except np.linalg.LinAlgError as exc:
            raise SingularKktError(
                "unconstrained Hessian is singular",
                rank_defect=self.n - np.linalg.matrix_rank(self.H)) from exc
        r_d = float(np.max(np.abs(self.H @ z + f), initial=0.0))
        return QpSolution(
            z_star=z, eq_multipliers=np.zeros(0),
            box_multipliers=np.zeros(self.n), status=QpStatus.OPTIMAL,
            iterations=1, primal_residual=0.0, dual_residual=r_d,
            objective=float(0.5 * z @ self.H @ z + f @ z))

    # -- polish ------------------------------------------------------------

    def _polish_once(self, problem: QpProblem, f, b_eq, act_low, act_up,
                     iterations):
        """Solve the reduced KKT system for one candidate active set.

        Returns (solution_or_None, low_violators, up_violators,
        add_low, add_up): sign-violating pinned rows that should be
        released, and bound-violating free rows that should be pinned.
        """
        s = self.settings
        n_low = act_low.size
        n_act = n_low + act_up.size
        ng = self.n_eq + n_act

        G = np.zeros((ng, self.n))
        h = np.zeros(ng)
        if self.n_eq:
            G[:self.n_eq] = self.A_eq
            h[:self.n_eq] = b_eq
        act_cols = np.concatenate([act_low, act_up]).astype(int)
        G[np.arange(self.n_eq, ng), act_cols] = 1.0
        h[self.n_eq:self.n_eq + n_low] = self.lower[act_low]
        h[self.n_eq + n_low:] = self.upper[act_up]

        delta = max(s.regularization, 1e-12)
        K_true = np.zeros((self.n + ng, self.n + ng))
        K_true[:self.n, :self.n] = self.H
        K_true[:self.n, self.n:] = G.T
        K_true[self.n:, :self.n] = G
        K_reg = K_true.copy()
        K_reg[:self.n, :self.n] += delta * np.eye(self.n)
        K_reg[self.n:, self.n:] -= delta * np.eye(ng)
        rhs = np.concatenate([-f, h])
        none = (None, np.zeros(0, int), np.zeros(0, int),
                np.zeros(0, int), np.zeros(0, int))
        try:
            lu = scipy.linalg.lu_factor(K_reg)
        except np.linalg.LinAlgError:
            return none
        sol = _refined_solve(lu, K_true, rhs, refine_steps=3)
        if not np.all(np.isfinite(sol)):
            return none

        z = sol[:self.n]
        lam = sol[self.n:self.n + self.n_eq]
        nu = sol[self.n + self.n_eq:]
        mu = np.zeros(self.n)
        mu[act_low] = nu[:n_low]
        mu[act_up] = nu[n_low:]

        tol = 10 * s.abs_tol * (1.0 + np.max(np.abs(mu), initial=0.0))
        bad_low = act_low[mu[act_low] > tol]
        bad_up = act_up[mu[act_up] < -tol]
        ztol = 10 * s.abs_tol * (1.0 + np.max(np.abs(z), initial=0.0))
        crossed_low = (z < self.lower - ztol) & (mu == 0)
        crossed_up = (z > self.upper + ztol) & (mu == 0)
        add_low = np.where(crossed_low)[0]
        add_up = np.where(crossed_up)[0]

        if bad_low.size or bad_up.size or add_low.size or add_up.size:
            return (None, bad_low, bad_up, add_low, add_up)
        report = kkt_report(problem, z, lam, mu)
        if not report.ok(s.abs_tol):
            return none
        solution = QpSolution(
            z_star=z, eq_multipliers=lam, box_multipliers=mu,
            status=QpStatus.OPTIMAL, iterations=iterations,
            primal_residual=max(report.primal_eq, report.box_violation),
            dual_residual=report.stationarity,
            objective=problem.objective(z), polished=True)
        return (solution, np.zeros(0, int), np.zeros(0, int),
                np.zeros(0, int), np.zeros(0, int))

    def _polish(self, problem: QpProblem, f, b_eq, z_rows, y_rows,
                iterations, failed_sigs: set):
        """Guess the active set from the iterate's dual signs, then refine
        it like a small active-set method: release sign-violating pins and
        pin bound-violating free rows. Accept only a candidate that passes
        the independent KKT verification at the strict tolerance.

        Returns (solution or None, factorizations spent). Outcomes depend
        only on the candidate set, so sets recorded in ``failed_sigs`` are
        never re-factorized.
        """
        y_box = y_rows[self.n_eq:]
        # a relative threshold keeps near-zero dual noise (stale warm-start
        # multipliers on inactive rows) from pinning phantom constraints
        thr = 1e-6 * (1.0 + np.max(np.abs(y_box), initial=0.0))
        fin_low = np.isfinite(self.lower[self.box_idx])
        fin_up = np.isfinite(self.upper[self.box_idx])
        act_low = self.box_idx[(y_box < -thr) & fin_low]
        act_up = self.box_idx[(y_box > thr) & fin_up]

        spent = 0
        for _ in range(4):
            sig = (act_low.tobytes(), act_up.tobytes())
            if sig in failed_sigs:
                return None, spent
            result = self._polish_once(problem, f, b_eq, act_low, act_up,
                                       iterations)
            spent += 1
            solution, bad_low, bad_up, add_low, add_up = result
            if solution is not None:
                return solution, spent
            failed_sigs.add(sig)
            moves = bad_low.size + bad_up.size + add_low.size + add_up.size
            if moves == 0:
                return None, spent
            act_low = np.setdiff1d(np.union1d(act_low, add_low), bad_low)
            act_up = np.setdiff1d(np.union1d(act_up, add_up), bad_up)
        return None, spent


def solve(problem: QpProblem, settings: Optional[QpSettings] = None,
          warm_start: Union[QpSolution, np.ndarray, None] = None
          ) -> QpSolution:
    """Solve a dense QP with equality and box constraints.

    Returns a :class:`QpSolution`; an OPTIMAL status certifies the KKT
    conditions at the settings' tolerances. Inconsistent equality systems
    are reported as PRIMAL_INFEASIBLE (detected up front by least squares,
    or during the iteration by the ADMM certificate when equalities clash
    with the box).
    """
    settings = settings or QpSettings()
    if problem.A_eq.shape[0]:
        ls_sol, *_ = np.linalg.lstsq(problem.A_eq, problem.b_eq, rcond=None)
        resid = np.max(np.abs(problem.A_eq @ ls_sol - problem.b_eq),
                       initial=0.0)
        if resid > 1e-8 * (1.0 + np.max(np.abs(problem.b_eq), initial=0.0)):
            return QpSolution(
                z_star=np.clip(ls_sol, problem.lower, problem.upper),
                eq_multipliers=np.zeros(problem.A_eq.shape[0]),
                box_multipliers=np.zeros(problem.n_vars),
                status=QpStatus.PRIMAL_INFEASIBLE, iterations=0,
                primal_residual=float(resid), dual_residual=np.inf,
                objective=np.nan)
    prepared = PreparedQp(problem.H, problem.A_eq if problem.A_eq.size
                          else None, problem.lower, problem.upper,
                          settings=settings)
    return prepared.solve(problem.f,
                          problem.b_eq if problem.A_eq.shape[0] else None,
                          warm_start=warm_start)


def solve_equality_only(H, f, A_eq, b_eq,
                        settings: Optional[QpSettings] = None) -> QpSolution:
    """Direct saddle-point solve of min 0.5 z'Hz + f'z s.t. A_eq z = b_eq.

    One factorization of the KKT matrix with a tiny ridge, plus iterative
    refinement against the unregularized system.

    Raises:
        SingularKktError: If the KKT matrix is singular (rank-deficient or
            inconsistent constraints); carries the rank defect.
    """
    settings = settings or QpSettings()
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    f = np.asarray(f, dtype=float).reshape(-1)
    A_eq = np.asarray(A_eq, dtype=float)
    if A_eq.ndim != 2:
        A_eq = A_eq.reshape(1, -1)
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    n = H.shape[0]
    ne = A_eq.shape[0]

    K_true = np.zeros((n + ne, n + ne))
    K_true[:n, :n] = H
    K_true[:n, n:] = A_eq.T
    K_true[n:, :n] = A_eq
    delta = max(settings.regularization, 1e-12)
    K_reg = K_true.copy()
    K_reg[:n, :n] += delta * np.eye(n)
    K_reg[n:, n:] -= delta * np.eye(ne)
    rhs = np.concatenate([-f, b_eq])

    lu = scipy.linalg.lu_factor(K_reg)
    sol = _refined_solve(lu, K_true, rhs, refine_steps=3)
    z = sol[:n]
    lam = sol[n:]
    grad = H @ z + f + A_eq.T @ lam
    gap = A_eq @ z - b_eq
    r_d = float(np.max(np.abs(grad), initial=0.0))
    r_p = float(np.max(np.abs(gap), initial=0.0))
    # primal residual is judged against the data magnitudes only; a huge
    # dual must not excuse an inconsistent constraint system
    p_scale = 1.0 + max(np.max(np.abs(b_eq), initial=0.0),
                        np.max(np.abs(A_eq @ z), initial=0.0))
    d_scale = 1.0 + max(np.max(np.abs(f), initial=0.0),
                        np.max(np.abs(H @ z), initial=0.0),
                        np.max(np.abs(A_eq.T @ lam), initial=0.0))
    if not np.all(np.isfinite(sol)) or r_p > 1e-7 * p_scale \
            or r_d > 1e-7 * d_scale:
        rank = np.linalg.matrix_rank(K_true)
        raise SingularKktError(
            f"singular KKT system (primal residual {r_p:.3e}, dual "
            f"residual {r_d:.3e}); equality constraints are "
            "rank-deficient or inconsistent",
            rank_defect=K_true.shape[0] - rank)
    return QpSolution(
        z_star=z, eq_multipliers=lam, box_multipliers=np.zeros(n),
        status=QpStatus.OPTIMAL, iterations=1,
        primal_residual=r_p, dual_residual=r_d,
        objective=float(0.5 * z @ H @ z + f @ z))
