"""Data-driven MPC for nonlinear plants via online-updated linear
predictions.

The controller keeps a sliding window of the last N input-output pairs
and treats the plant as linear on that window: depth-(L+n+1) Hankel
matrices of the windowed data parametrize the predictions. Two
ingredients make this work away from a fixed operating point. First, the
data window is refreshed every step, so the implicit linearization tracks
the closed-loop trajectory. Second, the weighting vector is constrained
to sum to one, which carries affine offsets in the data through to the
predictions, exactly what a linearization of a nonlinear system around a
non-equilibrium point produces.

Tracking uses an artificial equilibrium: the setpoint (u^s, y^s) is a
decision variable, the terminal n+1 steps are pinned to it, and its
distance to the true target output is penalized. The scheme therefore
stays feasible even when the target is not reachable within one horizon,
walking the artificial setpoint toward the target over time. A slack on
the predicted output rows with a norm penalty absorbs noise and
residual nonlinearity; the weighting vector carries its own norm penalty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .hankel import PeReport, build_hankel, persistence_order_check
from .lti_mpc import Box, ControllerInfeasibleError, PastWindow, as_weight
from .qpsolve import (PreparedQp, QpProblem, QpSettings, QpSolution,
                      QpStatus)


@dataclass
class NlControllerConfig:
    """Window length N, horizon parameter L (predictions cover k in
    [0, L]), assumed order n, weights, penalties, target, and the input
    and artificial-setpoint boxes. ``update_data=False`` freezes the data
    window after it first fills (ablation mode); the initialization
    window still tracks the latest measurements."""

    N: int
    L: int
    n: int
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    lambda_alpha: float
    lambda_sigma: float
    y_target: np.ndarray
    input_box: Box
    setpoint_box: Box
    update_data: bool = True

    def __post_init__(self):
        if min(self.N, self.L, self.n) < 1:
            raise ValueError("N, L, n must be positive")
        if self.lambda_alpha <= 0 or self.lambda_sigma <= 0:
            raise ValueError("lambda_alpha and lambda_sigma must be "
                             "positive")
        self.y_target = np.asarray(self.y_target, float).reshape(-1)
        p = self.y_target.size
        m = self.input_box.dim
        self.Q = as_weight(self.Q, p, "Q")
        self.R = as_weight(self.R, m, "R")
        self.S = as_weight(self.S, p, "S")
        if self.setpoint_box.dim != m:
            raise ValueError("setpoint_box dimension mismatch")
        if not self.input_box.strictly_contains_box(self.setpoint_box):
            raise ValueError("setpoint_box must lie strictly inside "
                             "input_box")
        needed = (m + 1) * (self.L + self.n + 1) - 1
        if self.N < needed:
            raise ValueError(
                f"window length N={self.N} cannot be persistently exciting "
                f"of order L+n+1; need at least {needed} samples")

    @property
    def n_inputs(self) -> int:
        return self.input_box.dim

    @property
    def n_outputs(self) -> int:
        return self.y_target.size


class SlidingWindow:
    """Ring buffer of the last N input-output pairs, oldest first."""

    def __init__(self, capacity: int, n_inputs: int, n_outputs: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._u = np.zeros((capacity, n_inputs))
        self._y = np.zeros((capacity, n_outputs))
        self._count = 0
        self._head = 0

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    @property
    def full(self) -> bool:
        return self._count >= self.capacity

    def push(self, u, y):
        self._u[self._head] = np.asarray(u, float)
        self._y[self._head] = np.asarray(y, float)
        self._head = (self._head + 1) % self.capacity
        self._count += 1

    def _ordered(self, buf: np.ndarray) -> np.ndarray:
        if self._count < self.capacity:
            return buf[:self._count].copy()
        return np.vstack([buf[self._head:], buf[:self._head]])

    def u_seq(self) -> np.ndarray:
        return self._ordered(self._u)

    def y_seq(self) -> np.ndarray:
        return self._ordered(self._y)


@dataclass
class NlOpenLoopSolution:
    """Optimal plan over k in [0, L] plus the artificial setpoint the
    terminal window is pinned to."""

    u_bar: np.ndarray
    y_bar: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    u_s_art: np.ndarray
    y_s_art: np.ndarray
    objective: float
    qp_stats: QpSolution


class _NlQpStructure:
    """Row/column layout and the constant pieces (cost, bounds, non-data
    equality rows) of the controller QP. The Hankel blocks and right-hand
    side are refreshed every step because the data window slides."""

    def __init__(self, cfg: NlControllerConfig):
        m, p, L, n, N = (cfg.n_inputs, cfg.n_outputs, cfg.L, cfg.n, cfg.N)
        depth = L + n + 1
        self.cfg = cfg
        self.depth = depth
        self.n_alpha = N - depth + 1
        n_sig = p * depth
        self.off_sigma = self.n_alpha
        self.off_u = self.off_sigma + n_sig
        self.off_y = self.off_u + m * depth
        self.off_us = self.off_y + p * depth
        self.off_ys = self.off_us + m
        self.nz = self.off_ys + p

        rows = (m + p) * depth + n * (m + p) + (n + 1) * (m + p) + 1
        self.n_rows = rows
        r = 0
        self.data_u_rows = slice(r, r + m * depth)
        r += m * depth
        self.data_y_rows = slice(r, r + p * depth)
        r += p * depth
        self.init_u_rows = slice(r, r + n * m)
        r += n * m
        self.init_y_rows = slice(r, r + n * p)
        r += n * p
        self.term_u_rows = slice(r, r + (n + 1) * m)
        r += (n + 1) * m
        self.term_y_rows = slice(r, r + (n + 1) * p)
        r += (n + 1) * p
        self.sum_row = r

        A = np.zeros((rows, self.nz))
        A[self.data_u_rows, self.off_u:self.off_u + m * depth] = \
            -np.eye(m * depth)
        A[self.data_y_rows, self.off_y:self.off_y + p * depth] = \
            -np.eye(p * depth)
        A[self.data_y_rows, self.off_sigma:self.off_sigma + n_sig] = \
            -np.eye(n_sig)
        A[self.init_u_rows, self.off_u:self.off_u + n * m] = np.eye(n * m)
        A[self.init_y_rows, self.off_y:self.off_y + n * p] = np.eye(n * p)
        cu = self.off_u + m * (depth - (n + 1))
        A[self.term_u_rows, cu:cu + (n + 1) * m] = np.eye((n + 1) * m)
        A[self.term_u_rows, self.off_us:self.off_us + m] = \
            -np.tile(np.eye(m), (n + 1, 1))
        cy = self.off_y + p * (depth - (n + 1))
        A[self.term_y_rows, cy:cy + (n + 1) * p] = np.eye((n + 1) * p)
        A[self.term_y_rows, self.off_ys:self.off_ys + p] = \
            -np.tile(np.eye(p), (n + 1, 1))
        A[self.sum_row, :self.n_alpha] = 1.0
        self.A_template = A

        H = np.zeros((self.nz, self.nz))
        H[:self.n_alpha, :self.n_alpha] = \
            2.0 * cfg.lambda_alpha * np.eye(self.n_alpha)
        sl = slice(self.off_sigma, self.off_sigma + n_sig)
        H[sl, sl] = 2.0 * cfg.lambda_sigma * np.eye(n_sig)
        us = slice(self.off_us, self.off_us + m)
        ys = slice(self.off_ys, self.off_ys + p)
        for k in range(L + 1):
            cu = self.off_u + m * (n + k)
            cy = self.off_y + p * (n + k)
            H[cu:cu + m, cu:cu + m] += 2.0 * cfg.R
            H[cu:cu + m, us] += -2.0 * cfg.R
            H[us, cu:cu + m] += -2.0 * cfg.R
            H[cy:cy + p, cy:cy + p] += 2.0 * cfg.Q
            H[cy:cy + p, ys] += -2.0 * cfg.Q
            H[ys, cy:cy + p] += -2.0 * cfg.Q
        H[us, us] += 2.0 * (L + 1) * cfg.R
        H[ys, ys] += 2.0 * (L + 1) * cfg.Q + 2.0 * cfg.S
        self.H = H

        lower = np.full(self.nz, -np.inf)
        upper = np.full(self.nz, np.inf)
        for k in range(L + 1):
            cu = self.off_u + m * (n + k)
            lower[cu:cu + m] = cfg.input_box.lower
            upper[cu:cu + m] = cfg.input_box.upper
        lower[self.off_us:self.off_us + m] = cfg.setpoint_box.lower
        upper[self.off_us:self.off_us + m] = cfg.setpoint_box.upper
        self.lower = lower
        self.upper = upper

    def linear_cost(self, y_target: np.ndarray) -> np.ndarray:
        f = np.zeros(self.nz)
        p = self.cfg.n_outputs
        f[self.off_ys:self.off_ys + p] = -2.0 * self.cfg.S @ y_target
        return f

    def equalities(self, u_win: np.ndarray, y_win: np.ndarray,
                   past: PastWindow):
        A = self.A_template.copy()
        A[self.data_u_rows, :self.n_alpha] = build_hankel(u_win, self.depth)
        A[self.data_y_rows, :self.n_alpha] = build_hankel(y_win, self.depth)
        b = np.zeros(self.n_rows)
        b[self.init_u_rows] = past.u.ravel()
        b[self.init_y_rows] = past.y.ravel()
        b[self.sum_row] = 1.0
        return A, b

    def unpack(self, qp: QpSolution, y_target: np.ndarray
               ) -> NlOpenLoopSolution:
        cfg = self.cfg
        m, p, n, depth = cfg.n_inputs, cfg.n_outputs, cfg.n, self.depth
        z = qp.z_star
        alpha = z[:self.n_alpha]
        sigma = z[self.off_sigma:self.off_u].reshape(depth, p)
        u_all = z[self.off_u:self.off_u + m * depth].reshape(depth, m)
        y_all = z[self.off_y:self.off_y + p * depth].reshape(depth, p)
        u_s = z[self.off_us:self.off_us + m]
        y_s = z[self.off_ys:self.off_ys + p]
        u_bar = u_all[n:]
        y_bar = y_all[n:]
        du = u_bar - u_s
        dy = y_bar - y_s
        ds = y_s - y_target
        obj = float(np.sum((du @ cfg.R) * du) + np.sum((dy @ cfg.Q) * dy)
                    + ds @ cfg.S @ ds
                    + cfg.lambda_alpha * alpha @ alpha
                    + cfg.lambda_sigma * np.sum(sigma * sigma))
        return NlOpenLoopSolution(u_bar=u_bar, y_bar=y_bar, alpha=alpha,
                                  sigma=sigma, u_s_art=u_s, y_s_art=y_s,
                                  objective=obj, qp_stats=qp)


def assemble_nl_qp(cfg: NlControllerConfig, window: SlidingWindow,
                   past: PastWindow) -> QpProblem:
    """Build the QP over z = (alpha, sigma, u_bar, y_bar, u^s, y^s) for
    the current data window and initialization window."""
    if not window.full:
        raise ValueError(f"data window holds {len(window)} of "
                         f"{window.capacity} samples")
    if len(past) != cfg.n:
        raise ValueError(f"past window holds {len(past)} steps, needs "
                         f"{cfg.n}")
    st = _NlQpStructure(cfg)
    A, b = st.equalities(window.u_seq(), window.y_seq(), past)
    return QpProblem(H=st.H, f=st.linear_cost(cfg.y_target), A_eq=A,
                     b_eq=b, lower=st.lower, upper=st.upper)


class NlDataDrivenMpc:
    """One-step receding-horizon controller on a sliding data window.

    Feed every applied input and measured output through
    :meth:`observe` (excitation phase included); once :attr:`ready`,
    call :meth:`compute_input` for the first move and :meth:`step` for
    each subsequent one.
    """

    def __init__(self, cfg: NlControllerConfig,
                 settings: Optional[QpSettings] = None):
        self.cfg = cfg
        self.settings = settings or QpSettings()
        self._structure = _NlQpStructure(cfg)
        self._window = SlidingWindow(cfg.N, cfg.n_inputs, cfg.n_outputs)
        self._past_u: list = []
        self._past_y: list = []
        self._warm: Optional[QpSolution] = None
        self.last_solution: Optional[NlOpenLoopSolution] = None
        self.last_pe_report: Optional[PeReport] = None
        self.y_target = cfg.y_target.copy()

    @property
    def ready(self) -> bool:
        return self._window.full and len(self._past_u) >= self.cfg.n

    def observe(self, u, y):
        """Record an applied input and the output measured alongside it."""
        if self.cfg.update_data or not self._window.full:
            self._window.push(u, y)
        self._past_u.append(np.asarray(u, float).reshape(-1))
        self._past_y.append(np.asarray(y, float).reshape(-1))
        if len(self._past_u) > self.cfg.n:
            self._past_u.pop(0)
            self._past_y.pop(0)

    def set_target(self, y_target):
        self.y_target = np.asarray(y_target, float).reshape(-1)

    def pe_advisory(self, order: Optional[int] = None) -> PeReport:
        order = order if order is not None else self._structure.depth
        return persistence_order_check(self._window.u_seq(), order)

    def _shifted_warm_start(self) -> Optional[QpSolution]:
        if self._warm is None:
            return None
        st = self._structure
        cfg = self.cfg
        m, p, depth = cfg.n_inputs, cfg.n_outputs, st.depth
        z = self._warm.z_star.copy()
        a = z[:st.n_alpha]
        z[:st.n_alpha] = np.concatenate([a[1:], a[:1]])
        for off, d in ((st.off_sigma, p), (st.off_u, m), (st.off_y, p)):
            blk = z[off:off + d * depth].reshape(depth, d)
            z[off:off + d * depth] = np.vstack([blk[1:], blk[-1:]]).ravel()
        return replace(self._warm, z_star=z)

    def compute_input(self) -> np.ndarray:
        """Solve at the current windows and return the input to apply."""
        if not self.ready:
            raise RuntimeError(
                f"controller not ready: {len(self._window)} of "
                f"{self.cfg.N} window samples, {len(self._past_u)} of "
                f"{self.cfg.n} past steps")
        st = self._structure
        past = PastWindow(np.array(self._past_u), np.array(self._past_y))
        A, b = st.equalities(self._window.u_seq(), self._window.y_seq(),
                             past)
        prepared = PreparedQp(st.H, A, st.lower, st.upper,
                              settings=self.settings)
        qp = prepared.solve(st.linear_cost(self.y_target), b,
                            warm_start=self._shifted_warm_start())
        if qp.status is QpStatus.PRIMAL_INFEASIBLE:
            raise ControllerInfeasibleError(
                "sliding-window QP infeasible at this step",
                qp_solution=qp)
        if qp.status is QpStatus.MAX_ITERATIONS:
            warnings.warn(
                f"QP solver hit the iteration limit (primal residual "
                f"{qp.primal_residual:.2e}); applying the best iterate",
                stacklevel=2)
        self._warm = qp
        self.last_pe_report = self.pe_advisory()
        self.last_solution = st.unpack(qp, self.y_target)
        return self.last_solution.u_bar[0].copy()

    def step(self, u_prev, y_prev) -> np.ndarray:
        """Push the latest pair into the window, then solve."""
        self.observe(u_prev, y_prev)
        return self.compute_input()

    # introspection used by the experiment harness
    def window_inputs(self) -> np.ndarray:
        return self._window.u_seq()

    def window_outputs(self) -> np.ndarray:
        return self._window.y_seq()
