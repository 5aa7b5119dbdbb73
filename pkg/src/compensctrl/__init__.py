"""Compensation-driven control of integrated human-robot kinematic chains."""

__version__ = "0.1.0"

from .kinematics import (Pose, Joint, KinematicChain, forward_kinematics, geometric_jacobian,
                         pose_error, unicycle_velocity_map, load_chain)
from .human import HumanModel, JacobianBundle, resolve_human_velocity, stack_human_jacobian
from .dynamics import ErrorState, LinearizedSystem, Targets, assemble_system, step_errors
from .estimation import (ObserverState, RegulatorConfig, observer_gain, covariance_step,
                         observer_step, lqr_gain, control_input)
from .scenario import (Scenario, SimulationTrace, load_scenario, run_trial, run_avatar_trial,
                       stability_sweep)

__all__ = [
    "Pose", "Joint", "KinematicChain", "forward_kinematics", "geometric_jacobian", "pose_error",
    "unicycle_velocity_map", "load_chain", "HumanModel", "JacobianBundle",
    "resolve_human_velocity", "stack_human_jacobian", "ErrorState", "LinearizedSystem",
    "Targets", "assemble_system", "step_errors", "ObserverState", "RegulatorConfig",
    "observer_gain", "covariance_step", "observer_step", "lqr_gain", "control_input",
    "Scenario", "SimulationTrace", "load_scenario", "run_trial", "run_avatar_trial",
    "stability_sweep",
]
