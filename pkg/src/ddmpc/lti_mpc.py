"""Data-driven MPC for LTI plants from one measured trajectory.

The controllers never identify a parametric model. A single persistently
exciting input-output record enters depth-(L+n) Hankel matrices, and the
optimization searches over linear combinations of their columns: the
weighting vector ``alpha`` parametrizes every length-(L+n) trajectory of
the data-generating system. The first n predicted steps are pinned to the
latest n measurements (fixing the internal state implicitly) and the last
n steps to the setpoint equilibrium, which yields closed-loop stability
for the receding-horizon scheme.

Two controllers are provided. :class:`NominalLtiMpc` assumes exact data
and re-solves every step. :class:`RobustLtiMpc` adds a slack on all
predicted output rows plus norm penalties on the trajectory weights and
the slack, and applies n inputs per solve (a multi-step scheme), which is
what its stability analysis under bounded measurement noise requires.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hankel import as_sequence, build_hankel, persistence_order_check
from .qpsolve import (PreparedQp, QpProblem, QpSettings, QpSolution,
                      QpStatus)


@dataclass(frozen=True)
class Box:
    """Per-channel interval bounds; entries may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower",
                           np.asarray(self.lower, dtype=float).reshape(-1))
        object.__setattr__(self, "upper",
                           np.asarray(self.upper, dtype=float).reshape(-1))
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shapes differ")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_bounds(cls, lower, upper, dim: int) -> "Box":
        lo = np.full(dim, float(lower)) if np.isscalar(lower) \
            else np.asarray(lower, dtype=float)
        up = np.full(dim, float(upper)) if np.isscalar(upper) \
            else np.asarray(upper, dtype=float)
        return cls(lo, up)

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol)
                    and np.all(v <= self.upper + tol))

    def clip(self, v) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def strictly_contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lower > self.lower)
                    and np.all(other.upper < self.upper))


def as_weight(w, dim: int, name: str = "weight") -> np.ndarray:
    """Coerce scalar / diagonal vector / full matrix into a symmetric
    positive definite (dim x dim) weight."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        W = np.eye(dim) * float(w)
    elif w.ndim == 1:
        if w.size != dim:
            raise ValueError(f"{name} diagonal has length {w.size}, "
                             f"expected {dim}")
        W = np.diag(w)
    else:
        if w.shape != (dim, dim):
            raise ValueError(f"{name} has shape {w.shape}, expected "
                             f"({dim}, {dim})")
        W = 0.5 * (w + w.T)
    if np.min(np.linalg.eigvalsh(W)) <= 0:
        raise ValueError(f"{name} must be positive definite")
    return W


@dataclass
class DataBuffer:
    """Offline input-output record, fixed for the LTI controllers."""

    u_data: np.ndarray
    y_data: np.ndarray

    def __post_init__(self):
        self.u_data = as_sequence(self.u_data)
        self.y_data = as_sequence(self.y_data)
        if self.u_data.shape[0] != self.y_data.shape[0]:
            raise ValueError("input and output records differ in length")

    def __len__(self) -> int:
        return self.u_data.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.u_data.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.y_data.shape[1]


class PastWindow:
    """The last n input-output pairs, newest last."""

    def __init__(self, u_init, y_init):
        self.u = as_sequence(u_init).copy()
        self.y = as_sequence(y_init).copy()
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError("past inputs and outputs differ in length")

    @classmethod
    def constant(cls, u, y, n: int) -> "PastWindow":
        u = np.asarray(u, dtype=float).reshape(1, -1)
        y = np.asarray(y, dtype=float).reshape(1, -1)
        return cls(np.repeat(u, n, axis=0), np.repeat(y, n, axis=0))

    def __len__(self) -> int:
        return self.u.shape[0]

    def push(self, u, y):
        self.u = np.vstack([self.u[1:], np.asarray(u, float).reshape(1, -1)])
        self.y = np.vstack([self.y[1:], np.asarray(y, float).reshape(1, -1)])


@dataclass
class LtiControllerConfig:
    """Horizon, weights, setpoint, and constraint data shared by the
    nominal and robust controllers. ``lambda_alpha``, ``lambda_sigma``,
    ``eps_bar`` only apply to the robust scheme."""

    L: int
    n: int
    Q: np.ndarray
    R: np.ndarray
    u_setpoint: np.ndarray
    y_setpoint: np.ndarray
    input_box: Optional[Box] = None
    output_box: Optional[Box] = None
    lambda_alpha: Optional[float] = None
    lambda_sigma: Optional[float] = None
    eps_bar: Optional[float] = None

    def __post_init__(self):
        if self.L < 1 or self.n < 1:
            raise ValueError("L and n must be positive")
        self.u_setpoint = np.asarray(self.u_setpoint, float).reshape(-1)
        self.y_setpoint = np.asarray(self.y_setpoint, float).reshape(-1)
        self.R = as_weight(self.R, self.n_inputs, "R")
        self.Q = as_weight(self.Q, self.n_outputs, "Q")
        if self.input_box is not None \
                and self.input_box.dim != self.n_inputs:
            raise ValueError("input_box dimension mismatch")
        if self.output_box is not None \
                and self.output_box.dim != self.n_outputs:
            raise ValueError("output_box dimension mismatch")

    @property
    def n_inputs(self) -> int:
        return self.u_setpoint.size

    @property
    def n_outputs(self) -> int:
        return self.y_setpoint.size


@dataclass
class OpenLoopSolution:
    """Optimal predicted trajectory over the horizon k in [0, L-1].

    ``sigma`` is reshaped (L+n, p) for the robust controller and zero for
    the nominal one; ``objective`` is the tracking cost plus (robust)
    regularization terms, recomputed from the primal solution.
    """

    u_bar: np.ndarray
    y_bar: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    objective: float
    qp_stats: QpSolution


class ControllerInfeasibleError(Exception):
    """The controller QP admits no feasible trajectory; carries the
    solver's diagnostics."""

    def __init__(self, message: str,
                 qp_solution: Optional[QpSolution] = None):
        super().__init__(message)
        self.qp_solution = qp_solution


class _LtiQpStructure:
    """Constant matrices of a controller QP. Only the right-hand side
    entries corresponding to the past window (and, on setpoint changes,
    the terminal pins and linear cost) vary between solves."""

    def __init__(self, cfg: LtiControllerConfig, data: DataBuffer,
                 robust: bool):
        L, n = cfg.L, cfg.n
        m, p = cfg.n_inputs, cfg.n_outputs
        depth = L + n
        N = len(data)
        if N < depth:
            raise ValueError(
                f"data record (length {N}) shorter than the prediction "
                f"span L+n = {depth}")
        if data.n_inputs != m or data.n_outputs != p:
            raise ValueError("data channel counts do not match the config")

        self.cfg = cfg
        self.robust = robust
        Hu = build_hankel(data.u_data, depth)
        Hy = build_hankel(data.y_data, depth)
        n_alpha = Hu.shape[1]

        self.n_alpha = n_alpha
        n_sig = p * depth if robust else 0
        self.off_sigma = n_alpha
        self.off_u = n_alpha + n_sig
        self.off_y = self.off_u + m * depth
        nz = self.off_y + p * depth
        self.nz = nz
        self.m, self.p, self.depth = m, p, depth

        # equality block: data consistency, then init window, then
        # terminal pins
        rows = (m + p) * depth + 2 * n * (m + p)
        A = np.zeros((rows, nz))
        b = np.zeros(rows)
        r = 0
        A[r:r + m * depth, :n_alpha] = Hu
        A[r:r + m * depth, self.off_u:self.off_u + m * depth] = \
            -np.eye(m * depth)
        r += m * depth
        A[r:r + p * depth, :n_alpha] = Hy
        A[r:r + p * depth, self.off_y:self.off_y + p * depth] = \
            -np.eye(p * depth)
        if robust:
            A[r:r + p * depth, self.off_sigma:self.off_sigma + n_sig] = \
                -np.eye(n_sig)
        r += p * depth
        self.init_u_rows = slice(r, r + n * m)
        A[self.init_u_rows, self.off_u:self.off_u + n * m] = np.eye(n * m)
        r += n * m
        self.init_y_rows = slice(r, r + n * p)
        A[self.init_y_rows, self.off_y:self.off_y + n * p] = np.eye(n * p)
        r += n * p
        self.term_u_rows = slice(r, r + n * m)
        term_u_cols = self.off_u + m * (depth - n)
        A[self.term_u_rows, term_u_cols:term_u_cols + n * m] = np.eye(n * m)
        b[self.term_u_rows] = np.tile(cfg.u_setpoint, n)
        r += n * m
        self.term_y_rows = slice(r, r + n * p)
        term_y_cols = self.off_y + p * (depth - n)
        A[self.term_y_rows, term_y_cols:term_y_cols + n * p] = np.eye(n * p)
        b[self.term_y_rows] = np.tile(cfg.y_setpoint, n)

        self.A_eq = A
        self.b_template = b

        # cost: stage terms over k in [0, L-1] only
        H = np.zeros((nz, nz))
        f = np.zeros(nz)
        for k in range(L):
            cu = self.off_u + m * (n + k)
            H[cu:cu + m, cu:cu + m] += 2.0 * cfg.R
            f[cu:cu + m] += -2.0 * cfg.R @ cfg.u_setpoint
            cy = self.off_y + p * (n + k)
            H[cy:cy + p, cy:cy + p] += 2.0 * cfg.Q
            f[cy:cy + p] += -2.0 * cfg.Q @ cfg.y_setpoint
        if robust:
            H[:n_alpha, :n_alpha] += \
                2.0 * cfg.lambda_alpha * cfg.eps_bar * np.eye(n_alpha)
            sl = slice(self.off_sigma, self.off_sigma + n_sig)
            H[sl, sl] += 2.0 * (cfg.lambda_sigma / cfg.eps_bar) \
                * np.eye(n_sig)
        self.H = H
        self.f = f

        lower = np.full(nz, -np.inf)
        upper = np.full(nz, np.inf)
        if cfg.input_box is not None:
            for k in range(L):
                cu = self.off_u + m * (n + k)
                lower[cu:cu + m] = cfg.input_box.lower
                upper[cu:cu + m] = cfg.input_box.upper
        if cfg.output_box is not None and not robust:
            for k in range(L):
                cy = self.off_y + p * (n + k)
                lower[cy:cy + p] = cfg.output_box.lower
                upper[cy:cy + p] = cfg.output_box.upper
        self.lower = lower
        self.upper = upper

    def rhs(self, past: PastWindow) -> np.ndarray:
        b = self.b_template.copy()
        b[self.init_u_rows] = past.u.ravel()
        b[self.init_y_rows] = past.y.ravel()
        return b

    def set_setpoint(self, u_s: np.ndarray, y_s: np.ndarray):
        cfg, n, m, p, L = self.cfg, self.cfg.n, self.m, self.p, self.cfg.L
        cfg.u_setpoint = np.asarray(u_s, float).reshape(-1)
        cfg.y_setpoint = np.asarray(y_s, float).reshape(-1)
        self.b_template[self.term_u_rows] = np.tile(cfg.u_setpoint, n)
        self.b_template[self.term_y_rows] = np.tile(cfg.y_setpoint, n)
        for k in range(L):
            cu = self.off_u + m * (n + k)
            self.f[cu:cu + m] = -2.0 * cfg.R @ cfg.u_setpoint
            cy = self.off_y + p * (n + k)
            self.f[cy:cy + p] = -2.0 * cfg.Q @ cfg.y_setpoint

    def unpack(self, qp: QpSolution) -> OpenLoopSolution:
        cfg = self.cfg
        L, n, m, p = cfg.L, cfg.n, self.m, self.p
        z = qp.z_star
        alpha = z[:self.n_alpha]
        sigma = z[self.off_sigma:self.off_u].reshape(self.depth, p) \
            if self.robust else np.zeros((self.depth, p))
        u_all = z[self.off_u:self.off_u + m * self.depth].reshape(
            self.depth, m)
        y_all = z[self.off_y:self.off_y + p * self.depth].reshape(
            self.depth, p)
        u_bar = u_all[n:]
        y_bar = y_all[n:]
        du = u_bar - cfg.u_setpoint
        dy = y_bar - cfg.y_setpoint
        obj = float(np.sum((du @ cfg.R) * du) + np.sum((dy @ cfg.Q) * dy))
        if self.robust:
            obj += cfg.lambda_alpha * cfg.eps_bar * float(alpha @ alpha)
            obj += cfg.lambda_sigma / cfg.eps_bar \
                * float(np.sum(sigma * sigma))
        return OpenLoopSolution(u_bar=u_bar, y_bar=y_bar, alpha=alpha,
                                sigma=sigma, objective=obj, qp_stats=qp)

    def qp_problem(self, past: PastWindow) -> QpProblem:
        return QpProblem(H=self.H, f=self.f, A_eq=self.A_eq,
                         b_eq=self.rhs(past), lower=self.lower,
                         upper=self.upper)

    def infeasibility_diagnostics(self, b: np.ndarray) -> str:
        z, *_ = np.linalg.lstsq(self.A_eq, b, rcond=None)
        eq_gap = float(np.max(np.abs(self.A_eq @ z - b), initial=0.0))
        box_gap = float(max(np.max(self.lower - z, initial=0.0),
                            np.max(z - self.upper, initial=0.0)))
        return (f"equality least-squares gap {eq_gap:.3e}, box violation "
                f"of the least-squares trajectory {box_gap:.3e}")


def _check_pe(cfg: LtiControllerConfig, data: DataBuffer):
    order = cfg.L + 2 * cfg.n
    report = persistence_order_check(data.u_data, order)
    if not report.is_pe:
        warnings.warn(
            f"input data are not persistently exciting of order {order} "
            f"(rank {report.computed_rank} of {report.required_rank}); "
            "predictions may not span every plant trajectory",
            stacklevel=3)
    return report


def assemble_nominal_qp(cfg: LtiControllerConfig, data: DataBuffer,
                        past: PastWindow) -> QpProblem:
    """Build the one-shot QP over z = (alpha, u_bar, y_bar): data
    consistency, init-window and terminal equalities, stage cost, and box
    constraints over the horizon."""
    if cfg.L < cfg.n:
        raise ValueError("nominal controller requires L >= n")
    if len(past) != cfg.n:
        raise ValueError(f"past window holds {len(past)} steps, needs "
                         f"{cfg.n}")
    return _LtiQpStructure(cfg, data, robust=False).qp_problem(past)


def assemble_robust_qp(cfg: LtiControllerConfig, data: DataBuffer,
                       past: PastWindow) -> QpProblem:
    """Robust variant over z = (alpha, sigma, u_bar, y_bar): slack on all
    predicted output rows, norm penalties on alpha and sigma, no output
    constraints."""
    if cfg.lambda_alpha is None or cfg.lambda_sigma is None \
            or cfg.eps_bar is None:
        raise ValueError("robust controller needs lambda_alpha, "
                         "lambda_sigma, and eps_bar")
    if min(cfg.lambda_alpha, cfg.lambda_sigma) <= 0 or cfg.eps_bar <= 0:
        raise ValueError("lambda_alpha, lambda_sigma, eps_bar must be "
                         "positive")
    if cfg.L < 2 * cfg.n:
        raise ValueError("robust controller requires L >= 2n")
    if len(past) != cfg.n:
        raise ValueError(f"past window holds {len(past)} steps, needs "
                         f"{cfg.n}")
    return _LtiQpStructure(cfg, data, robust=True).qp_problem(past)


class _LtiMpcBase:
    def __init__(self, cfg: LtiControllerConfig, data: DataBuffer,
                 robust: bool, settings: Optional[QpSettings] = None):
        self.cfg = cfg
        self.data = data
        self.pe_report = _check_pe(cfg, data)
        self._structure = _LtiQpStructure(cfg, data, robust=robust)
        st = self._structure
        self._prepared = PreparedQp(st.H, st.A_eq, st.lower, st.upper,
                                    settings=settings)
        self._past: Optional[PastWindow] = None
        self._warm: Optional[QpSolution] = None
        self.last_solution: Optional[OpenLoopSolution] = None

    def start(self, u_init, y_init):
        """Prime the controller with the last n input-output pairs."""
        past = PastWindow(u_init, y_init)
        if len(past) != self.cfg.n:
            raise ValueError(f"initial window holds {len(past)} steps, "
                             f"needs {self.cfg.n}")
        self._past = past

    def set_setpoint(self, u_setpoint, y_setpoint):
        self._structure.set_setpoint(u_setpoint, y_setpoint)

    @property
    def past(self) -> Optional[PastWindow]:
        return self._past

    def _solve(self) -> OpenLoopSolution:
        if self._past is None:
            raise RuntimeError("controller not started; call start() with "
                               "the initial window first")
        st = self._structure
        b = st.rhs(self._past)
        qp = self._prepared.solve(st.f, b, warm_start=self._warm)
        if qp.status is QpStatus.PRIMAL_INFEASIBLE:
            raise ControllerInfeasibleError(
                "controller QP infeasible: "
                + st.infeasibility_diagnostics(b), qp_solution=qp)
        if qp.status is QpStatus.MAX_ITERATIONS:
            warnings.warn(
                f"QP solver hit the iteration limit (primal residual "
                f"{qp.primal_residual:.2e}); using the best iterate",
                stacklevel=3)
        self._warm = qp
        self.last_solution = st.unpack(qp)
        return self.last_solution


class NominalLtiMpc(_LtiMpcBase):
    """Receding-horizon controller assuming exact data: solve, apply the
    first input, shift by one step."""

    def __init__(self, cfg: LtiControllerConfig, data: DataBuffer,
                 settings: Optional[QpSettings] = None):
        if cfg.L < cfg.n:
            raise ValueError("nominal controller requires L >= n")
        super().__init__(cfg, data, robust=False, settings=settings)

    def compute(self) -> np.ndarray:
        """Solve at the current window and return the first input."""
        return self._solve().u_bar[0].copy()

    def step(self, u_prev, y_prev) -> np.ndarray:
        """Record the latest applied input and measured output, then
        compute the next input."""
        self._past.push(u_prev, y_prev)
        return self.compute()


class RobustLtiMpc(_LtiMpcBase):
    """Noise-tolerant controller: solves once every n steps and applies
    the first n optimal inputs open-loop in between."""

    def __init__(self, cfg: LtiControllerConfig, data: DataBuffer,
                 settings: Optional[QpSettings] = None):
        if cfg.lambda_alpha is None or cfg.lambda_sigma is None \
                or cfg.eps_bar is None:
            raise ValueError("robust controller needs lambda_alpha, "
                             "lambda_sigma, and eps_bar")
        if min(cfg.lambda_alpha, cfg.lambda_sigma) <= 0 or cfg.eps_bar <= 0:
            raise ValueError("lambda_alpha, lambda_sigma, eps_bar must be "
                             "positive")
        if cfg.L < 2 * cfg.n:
            raise ValueError("robust controller requires L >= 2n")
        super().__init__(cfg, data, robust=True, settings=settings)
        self._plan: list = []

    def compute(self) -> np.ndarray:
        if not self._plan:
            sol = self._solve()
            self._plan = [sol.u_bar[k].copy() for k in range(self.cfg.n)]
        return self._plan.pop(0)

    def step(self, u_prev, y_prev) -> np.ndarray:
        self._past.push(u_prev, y_prev)
        return self.compute()
