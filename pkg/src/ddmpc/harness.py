"""Closed-loop experiment harness: configs, runner, metrics, sweeps, IO.

An experiment has two phases. During the excitation phase (steps
0..N-1) a random input drawn uniformly from a configured box drives the
plant while the controller only records data. From step N on, the
controller closes the loop. The setpoint schedule is a step function of
time; the tracking cost J sums the S-weighted squared output error over
a configurable window.

Configs are plain dataclasses with JSON-native field values so they
round-trip exactly through files; unknown keys are rejected with their
full path to catch typos. Logs export to CSV with a stable header and
reimport losslessly enough to recompute J to full precision.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .lti_mpc import (Box, ControllerInfeasibleError, DataBuffer,
                      LtiControllerConfig, NominalLtiMpc, RobustLtiMpc,
                      as_weight)
from .nl_mpc import NlControllerConfig, NlDataDrivenMpc
from .plant import (FourTankParams, FourTankPlant, LtiPlant, NoiseModel,
                    perturbed_four_tank, random_lti)
from .qpsolve import QpSettings

PLANT_KINDS = ("four_tank", "lti")
CONTROLLER_KINDS = ("nonlinear", "lti_nominal", "lti_robust")

Scalarish = Union[float, int, List[float]]


class ConfigError(Exception):
    """Invalid or unparseable experiment configuration."""


@dataclass
class PlantConfig:
    kind: str = "four_tank"
    ts: float = 1.5
    substeps: int = 1
    x0: Optional[List[float]] = None
    noise_eps: float = 0.0
    params: Dict[str, float] = field(default_factory=dict)
    perturb_spread: float = 0.0
    lti_order: int = 3
    lti_inputs: int = 2
    lti_outputs: int = 2
    lti_radius: float = 0.9
    lti_seed: int = 0


@dataclass
class ControllerConfig:
    kind: str = "nonlinear"
    data_length: int = 150
    horizon: int = 35
    order: int = 3
    q_weight: Scalarish = 1.0
    r_weight: Scalarish = 2.0
    s_weight: Scalarish = 20.0
    lambda_alpha: float = 5e-5
    lambda_sigma: float = 2e5
    eps_bar: Optional[float] = None
    u_min: Scalarish = 0.0
    u_max: Scalarish = 60.0
    setpoint_margin: float = 0.6
    y_min: Optional[Scalarish] = None
    y_max: Optional[Scalarish] = None
    u_setpoint: Optional[List[float]] = None
    y_setpoint: Optional[List[float]] = None
    update_data: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    t_end: int = 501
    plant: PlantConfig = field(default_factory=PlantConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    excitation_low: Scalarish = 20.0
    excitation_high: Scalarish = 30.0
    schedule: List[List] = field(
        default_factory=lambda: [[0, [15.0, 15.0]]])
    cost_window: Optional[List[int]] = None
    cost_s_bar: float = 20.0

    def validate(self):
        if self.plant.kind not in PLANT_KINDS:
            raise ConfigError(f"plant.kind must be one of {PLANT_KINDS}, "
                              f"got {self.plant.kind!r}")
        if self.controller.kind not in CONTROLLER_KINDS:
            raise ConfigError(
                f"controller.kind must be one of {CONTROLLER_KINDS}, got "
                f"{self.controller.kind!r}")
        N = self.controller.data_length
        if self.t_end < N:
            raise ConfigError(f"t_end={self.t_end} must be at least the "
                              f"data length N={N}")
        if self.controller.kind == "nonlinear":
            if not self.schedule:
                raise ConfigError("nonlinear controller needs at least one "
                                  "schedule entry")
            starts = [entry[0] for entry in self.schedule]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise ConfigError("schedule steps must be increasing")
            if starts[0] > N:
                raise ConfigError("first schedule entry must start at or "
                                  "before the controller takeover step")
        else:
            if len(self.schedule) > 1:
                raise ConfigError("setpoint schedules are supported by the "
                                  "nonlinear controller only")
            if self.controller.u_setpoint is None \
                    or self.controller.y_setpoint is None:
                raise ConfigError("LTI controllers need explicit "
                                  "controller.u_setpoint and y_setpoint")
        if self.cost_window is not None:
            if len(self.cost_window) != 2:
                raise ConfigError("cost_window must be [start, end]")

    def resolved_cost_window(self) -> Tuple[int, int]:
        if self.cost_window is not None:
            return int(self.cost_window[0]), int(self.cost_window[1])
        start = self.controller.data_length
        return start, min(500, self.t_end - 1)


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        key = sorted(unknown)[0]
        where = f"{path}.{key}" if path else key
        raise ConfigError(f"unknown config key: {where}")
    kwargs = {}
    for name, value in data.items():
        if name == "plant":
            kwargs[name] = _from_dict(PlantConfig, value, "plant")
        elif name == "controller":
            kwargs[name] = _from_dict(ControllerConfig, value, "controller")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: "
                          f"{exc.msg}") from exc
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


@dataclass
class SimulationLog:
    """Arrays with one row per simulated step, plus a summary dict.

    Controller-phase-only quantities (objective, norms, artificial
    setpoint) are NaN during excitation. ``u_s``/``y_s`` stay NaN for LTI
    controllers, which have no artificial setpoint.
    """

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x: np.ndarray
    objective: np.ndarray
    alpha_norm: np.ndarray
    sigma_norm: np.ndarray
    u_s: np.ndarray
    y_s: np.ndarray
    pe_min_sv: np.ndarray
    qp_iters: np.ndarray
    wall_time: np.ndarray
    controller_kind: str
    summary: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size


def _vec(value: Scalarish, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(dim, arr[0])
    if arr.size != dim:
        raise ConfigError(f"{name} must be a scalar or a length-{dim} list")
    return arr


def _target_at(schedule: Sequence, t: int) -> np.ndarray:
    tgt = schedule[0][1]
    for start, value in schedule:
        if t >= start:
            tgt = value
    return np.asarray(tgt, dtype=float)


def _effective_schedule(cfg: ExperimentConfig) -> List[List]:
    if cfg.controller.kind == "nonlinear":
        return [list(entry) for entry in cfg.schedule]
    return [[cfg.controller.data_length, list(cfg.controller.y_setpoint)]]


def _build_plant(cfg: ExperimentConfig, noise_seed, perturb_seed):
    pc = cfg.plant
    noise = NoiseModel(pc.noise_eps, seed=noise_seed) \
        if pc.noise_eps > 0 else None
    if pc.kind == "four_tank":
        try:
            params = FourTankParams(**pc.params)
        except TypeError as exc:
            raise ConfigError(f"plant.params: {exc}") from exc
        if pc.perturb_spread > 0:
            params = perturbed_four_tank(params, pc.perturb_spread,
                                         seed=perturb_seed)
        return FourTankPlant(params, ts=pc.ts, x0=pc.x0, noise=noise,
                             substeps=pc.substeps)
    system = random_lti(pc.lti_order, pc.lti_inputs, pc.lti_outputs,
                        spectral_radius_max=pc.lti_radius, seed=pc.lti_seed)
    return LtiPlant(system, x0=pc.x0, noise=noise)


def _build_nl_controller(cfg: ExperimentConfig, m: int,
                         settings: Optional[QpSettings]):
    cc = cfg.controller
    lo = _vec(cc.u_min, m, "controller.u_min")
    hi = _vec(cc.u_max, m, "controller.u_max")
    margin = float(cc.setpoint_margin)
    nl_cfg = NlControllerConfig(
        N=cc.data_length, L=cc.horizon, n=cc.order,
        Q=np.asarray(cc.q_weight, float), R=np.asarray(cc.r_weight, float),
        S=np.asarray(cc.s_weight, float),
        lambda_alpha=cc.lambda_alpha, lambda_sigma=cc.lambda_sigma,
        y_target=_target_at(cfg.schedule, cc.data_length),
        input_box=Box(lo, hi),
        setpoint_box=Box(lo + margin, hi - margin),
        update_data=cc.update_data)
    return NlDataDrivenMpc(nl_cfg, settings=settings)


def _build_lti_controller(cfg: ExperimentConfig, data: DataBuffer,
                          settings: Optional[QpSettings]):
    cc = cfg.controller
    m, p = data.n_inputs, data.n_outputs
    input_box = Box(_vec(cc.u_min, m, "controller.u_min"),
                    _vec(cc.u_max, m, "controller.u_max"))
    output_box = None
    if cc.y_min is not None or cc.y_max is not None:
        output_box = Box(
            _vec(cc.y_min if cc.y_min is not None else -math.inf, p,
                 "controller.y_min"),
            _vec(cc.y_max if cc.y_max is not None else math.inf, p,
                 "controller.y_max"))
    lti_cfg = LtiControllerConfig(
        L=cc.horizon, n=cc.order,
        Q=np.asarray(cc.q_weight, float), R=np.asarray(cc.r_weight, float),
        u_setpoint=np.asarray(cc.u_setpoint, float),
        y_setpoint=np.asarray(cc.y_setpoint, float),
        input_box=input_box, output_box=output_box,
        lambda_alpha=cc.lambda_alpha, lambda_sigma=cc.lambda_sigma,
        eps_bar=cc.eps_bar)
    if cc.kind == "lti_nominal":
        return NominalLtiMpc(lti_cfg, data, settings=settings)
    return RobustLtiMpc(lti_cfg, data, settings=settings)


def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None,
                   qp_settings: Optional[QpSettings] = None
                   ) -> SimulationLog:
    """Simulate excitation plus closed loop and return the full log.

    ``seed`` overrides ``cfg.seed``. Controller infeasibility truncates
    the log at the failing step and is recorded in the summary rather
    than raised.
    """
    cfg.validate()
    master = cfg.seed if seed is None else seed
    exc_seed, noise_seed, perturb_seed = \
        np.random.SeedSequence(master).spawn(3)
    rng_exc = np.random.default_rng(exc_seed)

    plant = _build_plant(cfg, noise_seed, perturb_seed)
    m, p = plant.n_inputs, plant.n_outputs
    nx = plant.state.size
    N = cfg.controller.data_length
    T = cfg.t_end
    nonlinear = cfg.controller.kind == "nonlinear"
    schedule = _effective_schedule(cfg)

    exc_lo = _vec(cfg.excitation_low, m, "excitation_low")
    exc_hi = _vec(cfg.excitation_high, m, "excitation_high")
    if np.any(exc_lo > exc_hi):
        raise ConfigError("excitation_low exceeds excitation_high")

    log_t = np.arange(T)
    log_u = np.full((T, m), np.nan)
    log_y = np.full((T, p), np.nan)
    log_x = np.full((T, nx), np.nan)
    log_obj = np.full(T, np.nan)
    log_anorm = np.full(T, np.nan)
    log_snorm = np.full(T, np.nan)
    log_us = np.full((T, m), np.nan)
    log_ys = np.full((T, p), np.nan)
    log_pe = np.full(T, np.nan)
    log_iters = np.zeros(T)
    log_wall = np.zeros(T)

    controller = _build_nl_controller(cfg, m, qp_settings) \
        if nonlinear else None
    exc_u: List[np.ndarray] = []
    exc_y: List[np.ndarray] = []

    for t in range(min(N, T)):
        u = rng_exc.uniform(exc_lo, exc_hi)
        log_x[t] = plant.state
        y = plant.step(u)
        log_u[t], log_y[t] = u, y
        if nonlinear:
            controller.observe(u, y)
        else:
            exc_u.append(u)
            exc_y.append(y)

    infeasible_at = None
    infeasible_msg = None
    steps_done = min(N, T)
    if T > N:
        if not nonlinear:
            data = DataBuffer(np.array(exc_u), np.array(exc_y))
            controller = _build_lti_controller(cfg, data, qp_settings)
            n = cfg.controller.order
            controller.start(np.array(exc_u[-n:]), np.array(exc_y[-n:]))
        u_prev = None
        y_prev = None
        for t in range(N, T):
            if nonlinear:
                for start, value in cfg.schedule:
                    if start == t and t > N:
                        controller.set_target(value)
            tic = time.perf_counter()
            try:
                if u_prev is None:
                    u = controller.compute_input() if nonlinear \
                        else controller.compute()
                else:
                    u = controller.step(u_prev, y_prev)
            except ControllerInfeasibleError as exc:
                infeasible_at = t
                infeasible_msg = str(exc)
                break
            log_wall[t] = time.perf_counter() - tic
            log_x[t] = plant.state
            y = plant.step(u)
            log_u[t], log_y[t] = u, y
            sol = controller.last_solution
            log_obj[t] = sol.objective
            log_anorm[t] = float(np.linalg.norm(sol.alpha))
            log_snorm[t] = float(np.linalg.norm(sol.sigma))
            log_iters[t] = sol.qp_stats.iterations
            if nonlinear:
                log_us[t] = sol.u_s_art
                log_ys[t] = sol.y_s_art
                log_pe[t] = \
                    controller.last_pe_report.smallest_retained_singular_value
            else:
                log_pe[t] = \
                    controller.pe_report.smallest_retained_singular_value
            u_prev, y_prev = u, y
            steps_done = t + 1

    keep = steps_done
    log = SimulationLog(
        t=log_t[:keep], u=log_u[:keep], y=log_y[:keep], x=log_x[:keep],
        objective=log_obj[:keep], alpha_norm=log_anorm[:keep],
        sigma_norm=log_snorm[:keep], u_s=log_us[:keep], y_s=log_ys[:keep],
        pe_min_sv=log_pe[:keep], qp_iters=log_iters[:keep],
        wall_time=log_wall[:keep], controller_kind=cfg.controller.kind)

    w0, w1 = cfg.resolved_cost_window()
    S = as_weight(np.asarray(cfg.cost_s_bar, float), p, "cost_s_bar")
    if infeasible_at is None and keep > max(w0, 0):
        J = closed_loop_cost(log, schedule, S, w0, min(w1, keep - 1))
    else:
        J = math.inf
    err = steady_state_error(log, schedule) if infeasible_at is None \
        else math.inf
    log.summary = {
        "J": J,
        "steady_error": err,
        "converged": bool(infeasible_at is None and err <= 0.5),
        "infeasible_at": infeasible_at,
        "infeasible_msg": infeasible_msg,
        "cost_window": [w0, w1],
        "wall_time_total": float(np.sum(log_wall)),
    }
    return log


def closed_loop_cost(log: SimulationLog, schedule: Sequence,
                     S: np.ndarray, t_start: int, t_end: int) -> float:
    """J = sum over t in [t_start, t_end] of ||y_t - y^T(t)||^2_S.

    An empty window (t_end < t_start) sums to zero. The window must lie
    within the log otherwise.
    """
    if t_end < t_start:
        return 0.0
    if t_start < int(log.t[0]) or t_end > int(log.t[-1]):
        raise ValueError(
            f"cost window [{t_start}, {t_end}] outside the log range "
            f"[{int(log.t[0])}, {int(log.t[-1])}]")
    S = np.asarray(S, dtype=float)
    total = 0.0
    base = int(log.t[0])
    for t in range(t_start, t_end + 1):
        e = log.y[t - base] - _target_at(schedule, t)
        total += float(e @ S @ e)
    return total


def steady_state_error(log: SimulationLog, schedule: Sequence,
                       steps: int = 50) -> float:
    """Mean over the last ``steps`` records of the max-norm target error."""
    if len(log) == 0:
        return math.inf
    tail = min(steps, len(log))
    errs = []
    base = int(log.t[0])
    for t in log.t[-tail:]:
        e = log.y[int(t) - base] - _target_at(schedule, int(t))
        errs.append(float(np.max(np.abs(e))))
    return float(np.mean(errs))


# -- CSV ------------------------------------------------------------------

def csv_header(log: SimulationLog) -> List[str]:
    m, p, nx = log.u.shape[1], log.y.shape[1], log.x.shape[1]
    cols = (["t"] + [f"u{i+1}" for i in range(m)]
            + [f"y{i+1}" for i in range(p)]
            + [f"x{i+1}" for i in range(nx)]
            + ["objective", "alpha_norm", "sigma_norm"])
    if log.controller_kind == "nonlinear":
        cols += [f"us{i+1}" for i in range(m)]
        cols += [f"ys{i+1}" for i in range(p)]
    cols += ["pe_min_sv", "qp_iters"]
    return cols


def export_csv(log: SimulationLog, path: str):
    cols = csv_header(log)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(log)):
            row = [str(int(log.t[i]))]
            fields = [log.u[i], log.y[i], log.x[i]]
            for block in fields:
                row += [_fmt(v) for v in block]
            row += [_fmt(log.objective[i]), _fmt(log.alpha_norm[i]),
                    _fmt(log.sigma_norm[i])]
            if log.controller_kind == "nonlinear":
                row += [_fmt(v) for v in log.u_s[i]]
                row += [_fmt(v) for v in log.y_s[i]]
            row += [_fmt(log.pe_min_sv[i]), str(int(log.qp_iters[i]))]
            fh.write(",".join(row) + "\n")


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def import_csv(path: str) -> SimulationLog:
    """Rebuild a log from an exported CSV. Wall times are not exported,
    so they come back as zeros; the summary is left empty."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    idx = {name: i for i, name in enumerate(header)}

    def count(prefix: str) -> int:
        return sum(1 for name in header
                   if name.startswith(prefix)
                   and name[len(prefix):].isdigit())

    m, p, nx = count("u"), count("y"), count("x")
    nonlinear = "us1" in idx

    def block(prefix: str, k: int) -> np.ndarray:
        return data[:, [idx[f"{prefix}{i+1}"] for i in range(k)]]

    T = data.shape[0]
    return SimulationLog(
        t=data[:, idx["t"]].astype(int),
        u=block("u", m), y=block("y", p), x=block("x", nx),
        objective=data[:, idx["objective"]],
        alpha_norm=data[:, idx["alpha_norm"]],
        sigma_norm=data[:, idx["sigma_norm"]],
        u_s=block("us", m) if nonlinear else np.full((T, m), np.nan),
        y_s=block("ys", p) if nonlinear else np.full((T, p), np.nan),
        pe_min_sv=data[:, idx["pe_min_sv"]],
        qp_iters=data[:, idx["qp_iters"]],
        wall_time=np.zeros(T),
        controller_kind="nonlinear" if nonlinear else "lti")


# -- sweeps ----------------------------------------------------------------

SWEEPABLE = ("lambda_alpha", "lambda_sigma", "N", "L", "n", "s_bar")

_PARAM_FIELD = {
    "lambda_alpha": "lambda_alpha",
    "lambda_sigma": "lambda_sigma",
    "N": "data_length",
    "L": "horizon",
    "n": "order",
    "s_bar": "s_weight",
}


def apply_sweep_value(cfg: ExperimentConfig, param: str,
                      value) -> ExperimentConfig:
    """Copy ``cfg`` with one swept controller parameter replaced. The
    tracking-cost weight used for J is ``cost_s_bar`` and is never swept,
    so costs stay comparable across an s_bar sweep."""
    if param not in SWEEPABLE:
        raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}, "
                          f"got {param!r}")
    out = config_from_dict(config_to_dict(cfg))
    field_name = _PARAM_FIELD[param]
    if param in ("N", "L", "n"):
        value = int(value)
    else:
        value = float(value)
    setattr(out.controller, field_name, value)
    out.validate()
    return out


def _sweep_one(args) -> dict:
    cfg_dict, param, value, seed = args
    cfg = config_from_dict(cfg_dict)
    cfg = apply_sweep_value(cfg, param, value)
    try:
        log = run_experiment(cfg, seed=seed)
        return {"param": param, "value": value, "seed": seed,
                "J": log.summary["J"],
                "converged": log.summary["converged"],
                "steady_error": log.summary["steady_error"]}
    except Exception as exc:  # a failed run marks its point, not the sweep
        return {"param": param, "value": value, "seed": seed,
                "J": math.inf, "converged": False,
                "steady_error": math.inf, "error": str(exc)}


@dataclass
class SweepResult:
    rows: List[dict]
    aggregated: List[dict]

    def good_values(self, threshold: float = 1.5e5) -> List:
        return [agg["value"] for agg in self.aggregated
                if agg["median_J"] <= threshold]


def sweep(cfg: ExperimentConfig, param: str, grid: Sequence,
          seeds: Sequence[int] = (0, 1, 2), jobs: int = 1) -> SweepResult:
    """Run ``cfg`` once per (grid value, seed) pair and aggregate.

    Grid points are independent; ``jobs > 1`` distributes them over
    processes. Results are ordered by the grid regardless of execution
    order.
    """
    tasks = [(config_to_dict(cfg), param, value, seed)
             for value in grid for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(task) for task in tasks]
    aggregated = []
    for value in grid:
        sub = [r for r in rows if r["value"] == value]
        aggregated.append({
            "param": param, "value": value,
            "median_J": float(np.median([r["J"] for r in sub])),
            "all_converged": all(r["converged"] for r in sub),
            "runs": len(sub)})
    return SweepResult(rows=rows, aggregated=aggregated)


def export_sweep_csv(result: SweepResult, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("param,value,seed,J,converged,steady_error\n")
        for r in result.rows:
            fh.write(f"{r['param']},{_fmt(r['value'])},{r['seed']},"
                     f"{_fmt(r['J'])},{int(r['converged'])},"
                     f"{_fmt(r['steady_error'])}\n")


# -- built-in demo configs --------------------------------------------------

def demo_config(name: str) -> ExperimentConfig:
    """Built-in experiment configurations.

    ``nonlinear`` is the four-tank benchmark: window 150, horizon 35,
    order 3, weights Q=I, R=2I, S=20I, penalties 5e-5 / 2e5, inputs in
    [0, 60]^2, excitation uniform on [20, 30]^2, target (15, 15), cost
    window [150, 500]. ``nonlinear-setpoint-change`` extends it to 1201
    steps with a target change to (11, 11) at step 601.
    """
    if name == "nonlinear":
        return ExperimentConfig()
    if name == "nonlinear-setpoint-change":
        cfg = ExperimentConfig()
        cfg.t_end = 1201
        cfg.schedule = [[0, [15.0, 15.0]], [601, [11.0, 11.0]]]
        return cfg
    if name in ("lti-nominal", "lti-robust"):
        robust = name == "lti-robust"
        plant = PlantConfig(kind="lti", lti_order=3, lti_inputs=2,
                            lti_outputs=2, lti_radius=0.9, lti_seed=7,
                            noise_eps=5e-3 if robust else 0.0)
        system = random_lti(3, 2, 2, spectral_radius_max=0.9, seed=7)
        y_sp = [0.5, -0.5]
        u_sp, _ = system.equilibrium_for_output(np.asarray(y_sp))
        u_lim = float(np.ceil(np.max(np.abs(u_sp)) + 5.0))
        controller = ControllerConfig(
            kind="lti_robust" if robust else "lti_nominal",
            data_length=60, horizon=12, order=3,
            q_weight=3.0, r_weight=1.0,
            lambda_alpha=5e-2 if robust else 5e-5,
            lambda_sigma=1e3 if robust else 2e5,
            eps_bar=5e-3 if robust else None,
            u_min=-u_lim, u_max=u_lim,
            u_setpoint=[float(v) for v in u_sp], y_setpoint=y_sp)
        return ExperimentConfig(
            seed=0, t_end=200, plant=plant, controller=controller,
            excitation_low=-1.0, excitation_high=1.0, schedule=[],
            cost_window=[60, 199], cost_s_bar=1.0)
    raise ConfigError(f"unknown demo config {name!r}")
