"""Simulation plants: a four-tank process and random LTI test systems.

States are plain float arrays. The four-tank model is the classic
quadruple-tank laboratory process: two pumps feed four interconnected
tanks, the upper tanks drain into the lower ones, and the measured
outputs are the two lower levels. Levels are clamped at zero before the
square-root outflow terms so the model stays defined when tanks run dry
during random excitation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class FourTankParams:
    """Physical parameters. Tank cross-sections ``A*`` and outlet
    cross-sections ``a*`` are in cm^2, ``g`` is gravitational
    acceleration in cm/s^2, and ``gamma*`` are the pump flow splits."""

    A1: float = 50.27
    A2: float = 50.27
    A3: float = 28.27
    A4: float = 28.27
    a1: float = 0.233
    a2: float = 0.242
    a3: float = 0.127
    a4: float = 0.127
    gamma1: float = 0.4
    gamma2: float = 0.4
    g: float = 981.0

    def __post_init__(self):
        for name in ("A1", "A2", "A3", "A4", "a1", "a2", "a3", "a4", "g"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma1", "gamma2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


class NoiseModel:
    """Additive measurement noise, i.i.d. uniform on [-eps_bar, eps_bar]
    per channel. ``eps_bar=0`` is exact measurement. Sampling is
    deterministic under a fixed seed."""

    def __init__(self, eps_bar: float = 0.0, seed: Optional[int] = None):
        if eps_bar < 0:
            raise ValueError("eps_bar must be nonnegative")
        self.eps_bar = float(eps_bar)
        self._rng = np.random.default_rng(seed)

    def sample(self, size: int) -> np.ndarray:
        if self.eps_bar == 0.0:
            return np.zeros(size)
        return self._rng.uniform(-self.eps_bar, self.eps_bar, size)


def continuous_dynamics(p: FourTankParams, x: np.ndarray,
                        u: np.ndarray) -> np.ndarray:
    """Time derivative of the four tank levels.

    Raises:
        ValueError: If any level is negative (callers clamp first).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(x < 0):
        raise ValueError("tank levels must be nonnegative")
    s = np.sqrt(2.0 * p.g * x)
    return np.array([
        (-p.a1 * s[0] + p.a3 * s[2] + p.gamma1 * u[0]) / p.A1,
        (-p.a2 * s[1] + p.a4 * s[3] + p.gamma2 * u[1]) / p.A2,
        (-p.a3 * s[2] + (1.0 - p.gamma2) * u[1]) / p.A3,
        (-p.a4 * s[3] + (1.0 - p.gamma1) * u[0]) / p.A4,
    ])


def euler_step(p: FourTankParams, x: np.ndarray, u: np.ndarray,
               ts: float) -> np.ndarray:
    """One forward-Euler step of length ``ts``, clamped at empty."""
    if ts <= 0:
        raise ValueError("ts must be positive")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return np.maximum(x + ts * continuous_dynamics(p, x, u), 0.0)


def measure(x: np.ndarray, noise: Optional[NoiseModel] = None) -> np.ndarray:
    """Measured output: the two lower-tank levels, plus noise if given."""
    y = np.asarray(x, dtype=float)[:2].copy()
    if noise is not None:
        y += noise.sample(2)
    return y


def four_tank_equilibrium(p: FourTankParams, u: np.ndarray) -> np.ndarray:
    """Steady-state levels for a constant input, in closed form.

    At equilibrium each outflow balances its inflow, which resolves tank
    by tank because the upper tanks feed only downward.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("pump inputs must be nonnegative")
    q3 = (1.0 - p.gamma2) * u[1]
    q4 = (1.0 - p.gamma1) * u[0]
    q1 = p.gamma1 * u[0] + q3
    q2 = p.gamma2 * u[1] + q4
    two_g = 2.0 * p.g
    return np.array([(q1 / p.a1) ** 2 / two_g,
                     (q2 / p.a2) ** 2 / two_g,
                     (q3 / p.a3) ** 2 / two_g,
                     (q4 / p.a4) ** 2 / two_g])


def four_tank_input_for_output(p: FourTankParams,
                               y_target: np.ndarray) -> np.ndarray:
    """Constant input whose equilibrium lower-tank levels equal
    ``y_target``. Solves the 2x2 flow-balance system; well posed because
    gamma1 + gamma2 != 1."""
    y = np.asarray(y_target, dtype=float)
    if np.any(y < 0):
        raise ValueError("target levels must be nonnegative")
    M = np.array([[p.gamma1, 1.0 - p.gamma2],
                  [1.0 - p.gamma1, p.gamma2]])
    rhs = np.array([p.a1 * np.sqrt(2.0 * p.g * y[0]),
                    p.a2 * np.sqrt(2.0 * p.g * y[1])])
    return np.linalg.solve(M, rhs)


def perturbed_four_tank(p: FourTankParams, relative_spread: float,
                        seed: Optional[int] = None) -> FourTankParams:
    """Randomly rescaled parameter set standing in for a physically
    different rig with qualitatively identical dynamics."""
    if not 0.0 <= relative_spread <= 0.5:
        raise ValueError("relative_spread must lie in [0, 0.5]")
    if relative_spread == 0.0:
        return p
    rng = np.random.default_rng(seed)
    names = ["A1", "A2", "A3", "A4", "a1", "a2", "a3", "a4",
             "gamma1", "gamma2", "g"]
    factors = rng.uniform(1.0 - relative_spread, 1.0 + relative_spread,
                          len(names))
    values = {name: getattr(p, name) * f for name, f in zip(names, factors)}
    values["gamma1"] = float(np.clip(values["gamma1"], 1e-3, 1.0 - 1e-3))
    values["gamma2"] = float(np.clip(values["gamma2"], 1e-3, 1.0 - 1e-3))
    return replace(p, **values)


class FourTankPlant:
    """Stateful simulator. ``step`` measures at the current state, then
    advances it, so the returned output pairs with the input just applied
    under a zero-order hold. ``substeps`` refines the Euler integration
    without changing the sampling time."""

    def __init__(self, params: Optional[FourTankParams] = None,
                 ts: float = 1.5, x0: Optional[np.ndarray] = None,
                 noise: Optional[NoiseModel] = None, substeps: int = 1):
        if ts <= 0:
            raise ValueError("ts must be positive")
        if substeps < 1:
            raise ValueError("substeps must be at least 1")
        self.params = params or FourTankParams()
        self.ts = float(ts)
        self.noise = noise
        self.substeps = int(substeps)
        self.state = np.zeros(4) if x0 is None \
            else np.maximum(np.asarray(x0, dtype=float), 0.0)

    @property
    def n_inputs(self) -> int:
        return 2

    @property
    def n_outputs(self) -> int:
        return 2

    def reset(self, x0: Optional[np.ndarray] = None):
        self.state = np.zeros(4) if x0 is None \
            else np.maximum(np.asarray(x0, dtype=float), 0.0)

    def step(self, u: np.ndarray) -> np.ndarray:
        y = measure(self.state, self.noise)
        dt = self.ts / self.substeps
        x = self.state
        for _ in range(self.substeps):
            x = euler_step(self.params, x, u, dt)
        self.state = x
        return y


@dataclass(frozen=True)
class LtiSystem:
    """Discrete-time state-space system x+ = Ax + Bu, y = Cx + Du."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def simulate(self, u_seq: np.ndarray,
                 x0: Optional[np.ndarray] = None
                 ) -> Tuple[np.ndarray, np.ndarray]:
        """Exact recursion over a (T, m) input sequence. Returns
        (y_seq, x_seq) with y_seq of shape (T, p) and x_seq of shape
        (T+1, n) including the terminal state."""
        u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
        T = u_seq.shape[0]
        x = np.zeros(self.order) if x0 is None \
            else np.asarray(x0, dtype=float)
        x_seq = np.empty((T + 1, self.order))
        y_seq = np.empty((T, self.n_outputs))
        for k in range(T):
            x_seq[k] = x
            y_seq[k] = self.C @ x + self.D @ u_seq[k]
            x = self.A @ x + self.B @ u_seq[k]
        x_seq[T] = x
        return y_seq, x_seq

    def equilibrium_for_output(self, y_target: np.ndarray
                               ) -> Tuple[np.ndarray, np.ndarray]:
        """Least-squares (u^s, x^s) with x^s = Ax^s + Bu^s and
        Cx^s + Du^s = y_target."""
        n, m, p = self.order, self.n_inputs, self.n_outputs
        M = np.zeros((n + p, n + m))
        M[:n, :n] = np.eye(n) - self.A
        M[:n, n:] = -self.B
        M[n:, :n] = self.C
        M[n:, n:] = self.D
        rhs = np.concatenate([np.zeros(n), np.asarray(y_target, float)])
        sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        return sol[n:], sol[:n]


class LtiPlant:
    """Stateful wrapper around :class:`LtiSystem` with the same step
    convention as :class:`FourTankPlant`."""

    def __init__(self, system: LtiSystem, x0: Optional[np.ndarray] = None,
                 noise: Optional[NoiseModel] = None):
        self.system = system
        self.noise = noise
        self.state = np.zeros(system.order) if x0 is None \
            else np.asarray(x0, dtype=float)

    @property
    def n_inputs(self) -> int:
        return self.system.n_inputs

    @property
    def n_outputs(self) -> int:
        return self.system.n_outputs

    def reset(self, x0: Optional[np.ndarray] = None):
        self.state = np.zeros(self.system.order) if x0 is None \
            else np.asarray(x0, dtype=float)

    def step(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        y = self.system.C @ self.state + self.system.D @ u
        if self.noise is not None:
            y = y + self.noise.sample(self.system.n_outputs)
        self.state = self.system.A @ self.state + self.system.B @ u
        return y


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def is_minimal(system: LtiSystem, tol: float = 1e-9) -> bool:
    """Controllability and observability rank certificates."""
    n = system.order
    ctrb = controllability_matrix(system.A, system.B)
    obsv = observability_matrix(system.A, system.C)
    return (np.linalg.matrix_rank(ctrb, tol=tol) == n
            and np.linalg.matrix_rank(obsv, tol=tol) == n)


def random_lti(n: int, m: int, p: int, spectral_radius_max: float = 0.95,
               seed: Optional[int] = None, max_tries: int = 50,
               with_feedthrough: bool = False) -> LtiSystem:
    """Random stable, minimal discrete-time system.

    Samples dense matrices, rescales A to the requested spectral radius
    bound, and re-samples until the controllability and observability
    certificates pass.

    Raises:
        RuntimeError: If ``max_tries`` samples all fail the rank checks.
    """
    if min(n, m, p) < 1:
        raise ValueError("n, m, p must all be at least 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        radius = max(abs(np.linalg.eigvals(A)))
        if radius > 0:
            A *= rng.uniform(0.5, 1.0) * spectral_radius_max / radius
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) * 0.1 if with_feedthrough \
            else np.zeros((p, m))
        system = LtiSystem(A=A, B=B, C=C, D=D)
        if is_minimal(system):
            return system
    raise RuntimeError(
        f"failed to sample a minimal system in {max_tries} tries")


def four_tank_linearization(p: FourTankParams, x_eq: np.ndarray,
                            u_eq: np.ndarray, ts: float = 1.5) -> LtiSystem:
    """Euler-discretized Jacobian linearization at a strictly positive
    equilibrium. The input argument ``u_eq`` fixes the operating point;
    the returned system acts on deviation variables."""
    x_eq = np.asarray(x_eq, dtype=float)
    if np.any(x_eq <= 0):
        raise ValueError("linearization requires strictly positive levels")
    # d/dx sqrt(2 g x) = g / sqrt(2 g x)
    d = p.g / np.sqrt(2.0 * p.g * x_eq)
    Ac = np.zeros((4, 4))
    Ac[0, 0] = -p.a1 * d[0] / p.A1
    Ac[0, 2] = p.a3 * d[2] / p.A1
    Ac[1, 1] = -p.a2 * d[1] / p.A2
    Ac[1, 3] = p.a4 * d[3] / p.A2
    Ac[2, 2] = -p.a3 * d[2] / p.A3
    Ac[3, 3] = -p.a4 * d[3] / p.A4
    Bc = np.array([[p.gamma1 / p.A1, 0.0],
                   [0.0, p.gamma2 / p.A2],
                   [0.0, (1.0 - p.gamma2) / p.A3],
                   [(1.0 - p.gamma1) / p.A4, 0.0]])
    A = np.eye(4) + ts * Ac
    B = ts * Bc
    C = np.array([[1.0, 0.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0, 0.0]])
    D = np.zeros((2, 2))
    return LtiSystem(A=A, B=B, C=C, D=D)
