"""Independent reference implementations used to verify the package.

Everything here is deliberately written from first principles with
different algorithms than the library code: projected-gradient and
active-set-enumeration QP solvers, a state-space MPC built from known
system matrices, and root-finding equilibrium solvers. Agreement between
these and the package is the core correctness evidence.
"""

from __future__ import annotations

import itertools
from typing import Optional, Tuple

import numpy as np
from scipy import optimize

from ddmpc.plant import FourTankParams, LtiSystem, continuous_dynamics
from ddmpc.qpsolve import QpProblem


# ---------------------------------------------------------------------------
# QP oracles


def pg_solve(problem: QpProblem, max_outer: int = 200,
             max_inner: int = 4000, tol: float = 1e-10) -> np.ndarray:
    """Augmented-Lagrangian + projected-gradient (FISTA) QP oracle.

    Handles min 0.5 z'Hz + f'z, A z = b, lower <= z <= upper by running
    FISTA with box projection on the augmented Lagrangian and updating
    the multipliers between outer rounds. Slow but entirely independent
    of the package's ADMM + direct-KKT approach.
    """
    H = np.asarray(problem.H, float)
    f = np.asarray(problem.f, float)
    nz = f.size
    lower = problem.lower if problem.lower is not None \
        else np.full(nz, -np.inf)
    upper = problem.upper if problem.upper is not None \
        else np.full(nz, np.inf)
    A = problem.A_eq
    b = problem.b_eq
    has_eq = A is not None and A.size > 0

    rho = 10.0
    lam = np.zeros(0 if not has_eq else b.size)
    z = np.clip(np.zeros(nz), lower, upper)

    def grad(z, lam, rho):
        g = H @ z + f
        if has_eq:
            g = g + A.T @ (lam + rho * (A @ z - b))
        return g

    for _ in range(max_outer):
        M = H + (rho * A.T @ A if has_eq else 0.0)
        lip = float(np.linalg.norm(M, 2)) + 1e-12
        step = 1.0 / lip
        zk = z.copy()
        yk = z.copy()
        t_k = 1.0
        for _ in range(max_inner):
            z_next = np.clip(yk - step * grad(yk, lam, rho), lower, upper)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
            yk = z_next + (t_k - 1.0) / t_next * (z_next - zk)
            if np.max(np.abs(z_next - zk)) < tol * (1 + np.max(np.abs(zk))):
                zk = z_next
                break
            zk, t_k = z_next, t_next
        z = zk
        if not has_eq:
            break
        r = A @ z - b
        if np.max(np.abs(r)) < 1e-10 * (1.0 + np.max(np.abs(b))):
            break
        lam = lam + rho * r
        rho = min(rho * 4.0, 1e8)
    return z


def active_set_enumeration(problem: QpProblem,
                           max_vars: int = 10) -> Optional[np.ndarray]:
    """Exact solution of a small strictly convex box QP by enumerating
    active sets. Returns None when the problem is too large or no
    KKT-consistent candidate is found (e.g. infeasible equalities)."""
    H = np.asarray(problem.H, float)
    f = np.asarray(problem.f, float)
    nz = f.size
    if nz > max_vars:
        return None
    lower = problem.lower if problem.lower is not None \
        else np.full(nz, -np.inf)
    upper = problem.upper if problem.upper is not None \
        else np.full(nz, np.inf)
    A = problem.A_eq if problem.A_eq is not None else np.zeros((0, nz))
    b = problem.b_eq if problem.b_eq is not None else np.zeros(0)
    ne = A.shape[0]

    best = None
    best_obj = np.inf
    idx = np.arange(nz)
    for low_set in _subsets(idx[np.isfinite(lower)]):
        for up_set in _subsets(idx[np.isfinite(upper)]):
            if set(low_set) & set(up_set):
                continue
            fixed = list(low_set) + list(up_set)
            vals = [lower[i] for i in low_set] + [upper[i] for i in up_set]
            free = [i for i in range(nz) if i not in fixed]
            # solve the equality-constrained reduction on the free block
            zf = np.zeros(nz)
            zf[fixed] = vals
            Hff = H[np.ix_(free, free)]
            Af = A[:, free]
            rhs_f = -(f[free] + H[np.ix_(free, fixed)] @ np.asarray(vals)) \
                if fixed else -f[free]
            k = len(free)
            K = np.block([[Hff, Af.T], [Af, np.zeros((ne, ne))]])
            rhs = np.concatenate([
                rhs_f, b - (A[:, fixed] @ np.asarray(vals) if fixed
                            else np.zeros(ne))])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            zf[free] = sol[:k]
            if np.any(zf < lower - 1e-9) or np.any(zf > upper + 1e-9):
                continue
            # multiplier sign check for the fixed variables
            g = H @ zf + f + (A.T @ sol[k:] if ne else 0.0)
            ok = all(g[i] >= -1e-8 for i in low_set) \
                and all(g[i] <= 1e-8 for i in up_set)
            if not ok:
                continue
            obj = problem.objective(zf)
            if obj < best_obj - 1e-12:
                best_obj = obj
                best = zf
    return best


def _subsets(indices):
    out = [()]
    for r in range(1, len(indices) + 1):
        out.extend(itertools.combinations(indices, r))
    return out


# ---------------------------------------------------------------------------
# Model-based MPC oracle (known state-space matrices)


def model_mpc_input(system: LtiSystem, u_past: np.ndarray,
                    y_past: np.ndarray, L: int, n: int,
                    Q: np.ndarray, R: np.ndarray,
                    u_setpoint: np.ndarray, y_setpoint: np.ndarray,
                    u_lower=None, u_upper=None,
                    return_objective: bool = False):
    """First input of the model-based tracking MPC sharing the data-driven
    scheme's structure: predictions over k in [-n, L-1], the first n steps
    pinned to the measured past, the last n steps pinned to the setpoint.

    Decision variables are the initial state and the L-n free inputs. The
    problem is an equality-constrained QP in those variables; it is solved
    exactly through its KKT system with numpy only. Input bounds are not
    part of the KKT solve; if a bound turns out active the oracle refuses,
    so equivalence tests must use instances with non-binding boxes.
    """
    A, B, C, D = system.A, system.B, system.C, system.D
    nx = A.shape[0]
    m = B.shape[1]
    u_past = np.asarray(u_past, float).reshape(n, m)
    y_past = np.asarray(y_past, float).reshape(n, -1)
    p = y_past.shape[1]
    u_setpoint = np.asarray(u_setpoint, float).reshape(m)
    y_setpoint = np.asarray(y_setpoint, float).reshape(p)
    Q = np.asarray(Q, float)
    R = np.asarray(R, float)

    n_free = L - n
    nz = nx + n_free * m

    def rollout(zv):
        x = zv[:nx].copy()
        u_free = zv[nx:].reshape(n_free, m)
        u_seq = np.vstack([u_past, u_free, np.tile(u_setpoint, (n, 1))])
        ys = np.empty((n + L, p))
        for k in range(n + L):
            ys[k] = C @ x + D @ u_seq[k]
            x = A @ x + B @ u_seq[k]
        return u_seq, ys

    # the rollout is affine in z; recover the linear part column by column
    base_u, base_y = rollout(np.zeros(nz))
    Mu = np.empty(((n + L) * m, nz))
    My = np.empty(((n + L) * p, nz))
    for j in range(nz):
        e = np.zeros(nz)
        e[j] = 1.0
        uj, yj = rollout(e)
        Mu[:, j] = (uj - base_u).ravel()
        My[:, j] = (yj - base_y).ravel()

    horizon = slice(n * m, (n + L) * m)
    horizon_y = slice(n * p, (n + L) * p)
    Su, cu = Mu[horizon], base_u.ravel()[horizon] - np.tile(u_setpoint, L)
    Sy, cy = My[horizon_y], base_y.ravel()[horizon_y] - np.tile(y_setpoint, L)
    R_bar = np.kron(np.eye(L), R)
    Q_bar = np.kron(np.eye(L), Q)
    H = 2.0 * (Su.T @ R_bar @ Su + Sy.T @ Q_bar @ Sy)
    f = 2.0 * (Su.T @ R_bar @ cu + Sy.T @ Q_bar @ cy)

    init_y = slice(0, n * p)
    term_y = slice(L * p, (n + L) * p)
    A_eq = np.vstack([My[init_y], My[term_y]])
    b_eq = np.concatenate([y_past.ravel() - base_y.ravel()[init_y],
                           np.tile(y_setpoint, n)
                           - base_y.ravel()[term_y]])

    ne = A_eq.shape[0]
    kkt = np.zeros((nz + ne, nz + ne))
    kkt[:nz, :nz] = H
    kkt[:nz, nz:] = A_eq.T
    kkt[nz:, :nz] = A_eq
    rhs = np.concatenate([-f, b_eq])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    z = sol[:nz]
    if np.max(np.abs(A_eq @ z - b_eq)) > 1e-7:
        raise RuntimeError("model MPC oracle: equality constraints "
                           "unsatisfiable for this instance")
    u_first = z[nx:nx + m]
    if u_lower is not None:
        lo = np.broadcast_to(np.asarray(u_lower, float), (m,))
        hi = np.broadcast_to(np.asarray(u_upper, float), (m,))
        u_free = z[nx:].reshape(n_free, m)
        if (u_free < lo - 1e-9).any() or (u_free > hi + 1e-9).any():
            raise RuntimeError("model MPC oracle: input bound active; "
                               "this oracle only covers interior optima")
    if return_objective:
        objective = 0.5 * z @ H @ z + f @ z \
            + cu @ R_bar @ cu + cy @ Q_bar @ cy
        return u_first.copy(), float(objective)
    return u_first.copy()


# ---------------------------------------------------------------------------
# Plant oracles


def fsolve_equilibrium(params: FourTankParams, u: np.ndarray) -> np.ndarray:
    """Root-finding equilibrium of the tank dynamics, independent of the
    closed-form expression in the package."""
    u = np.asarray(u, float)

    def fun(x):
        return continuous_dynamics(params, np.maximum(x, 0.0), u)

    x0 = np.full(4, 10.0)
    sol = optimize.fsolve(fun, x0, full_output=False, xtol=1e-13)
    return np.asarray(sol)


def realization_residual(system: LtiSystem, u_seq: np.ndarray,
                         y_seq: np.ndarray) -> float:
    """How far (u_seq, y_seq) is from being a trajectory of ``system``.

    Fits the initial state by least squares and returns the maximum
    output mismatch under the known matrices.
    """
    A, B, C, D = system.A, system.B, system.C, system.D
    nx = A.shape[0]
    u_seq = np.asarray(u_seq, float)
    y_seq = np.asarray(y_seq, float)
    T = u_seq.shape[0]
    p = y_seq.shape[1]

    # y_k = C A^k x0 + sum_{j<k} C A^{k-1-j} B u_j + D u_k
    phi = np.zeros((T * p, nx))
    forced = np.zeros((T, p))
    Ak = np.eye(nx)
    powers = [Ak]
    for _ in range(T - 1):
        Ak = A @ Ak
        powers.append(Ak)
    for k in range(T):
        phi[k * p:(k + 1) * p] = C @ powers[k]
        acc = D @ u_seq[k]
        for j in range(k):
            acc = acc + C @ powers[k - 1 - j] @ B @ u_seq[j]
        forced[k] = acc
    rhs = (y_seq - forced).ravel()
    x0, *_ = np.linalg.lstsq(phi, rhs, rcond=None)
    resid = phi @ x0 - rhs
    return float(np.max(np.abs(resid))) if resid.size else 0.0
