"""Data-driven model predictive control from measured trajectories.

The package covers the full pipeline: Hankel-matrix trajectory
parametrization and excitation diagnostics (:mod:`ddmpc.hankel`), a dense
QP engine (:mod:`ddmpc.qpsolve`), nominal and robust LTI controllers
(:mod:`ddmpc.lti_mpc`), a sliding-window controller for nonlinear plants
(:mod:`ddmpc.nl_mpc`), simulation plants (:mod:`ddmpc.plant`), and a
closed-loop experiment harness with a CLI (:mod:`ddmpc.harness`,
:mod:`ddmpc.cli`).
"""

from .hankel import (PeReport, TrajectoryValidation, as_sequence,
                     build_hankel, persistence_order_check,
                     validate_trajectory)
from .harness import (ConfigError, ControllerConfig, ExperimentConfig,
                      PlantConfig, SimulationLog, SweepResult,
                      closed_loop_cost, demo_config, export_csv,
                      import_csv, load_config, run_experiment, save_config,
                      steady_state_error, sweep)
from .lti_mpc import (Box, ControllerInfeasibleError, DataBuffer,
                      LtiControllerConfig, NominalLtiMpc, OpenLoopSolution,
                      PastWindow, RobustLtiMpc, assemble_nominal_qp,
                      assemble_robust_qp)
from .nl_mpc import (NlControllerConfig, NlDataDrivenMpc,
                     NlOpenLoopSolution, SlidingWindow, assemble_nl_qp)
from .plant import (FourTankParams, FourTankPlant, LtiPlant, LtiSystem,
                    NoiseModel, continuous_dynamics, euler_step,
                    four_tank_equilibrium, four_tank_input_for_output,
                    four_tank_linearization, measure, perturbed_four_tank,
                    random_lti)
from .qpsolve import (KktReport, PreparedQp, QpProblem, QpSettings,
                      QpSolution, QpStatus, SingularKktError, duality_gap,
                      kkt_report, solve, solve_equality_only)

__version__ = "0.1.0"

__all__ = [
    "PeReport", "TrajectoryValidation", "as_sequence", "build_hankel",
    "persistence_order_check", "validate_trajectory",
    "ConfigError", "ControllerConfig", "ExperimentConfig", "PlantConfig",
    "SimulationLog", "SweepResult", "closed_loop_cost", "demo_config",
    "export_csv", "import_csv", "load_config", "run_experiment",
    "save_config", "steady_state_error", "sweep",
    "Box", "ControllerInfeasibleError", "DataBuffer",
    "LtiControllerConfig", "NominalLtiMpc", "OpenLoopSolution",
    "PastWindow", "RobustLtiMpc", "assemble_nominal_qp",
    "assemble_robust_qp",
    "NlControllerConfig", "NlDataDrivenMpc", "NlOpenLoopSolution",
    "SlidingWindow", "assemble_nl_qp",
    "FourTankParams", "FourTankPlant", "LtiPlant", "LtiSystem",
    "NoiseModel", "continuous_dynamics", "euler_step",
    "four_tank_equilibrium", "four_tank_input_for_output",
    "four_tank_linearization", "measure", "perturbed_four_tank",
    "random_lti",
    "KktReport", "PreparedQp", "QpProblem", "QpSettings", "QpSolution",
    "QpStatus", "SingularKktError", "duality_gap", "kkt_report", "solve",
    "solve_equality_only",
    "__version__",
]
