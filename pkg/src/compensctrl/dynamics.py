"""Reaching/compensation error dynamics.

With the human following :func:`~compensctrl.human.resolve_human_velocity`
and the robot driven by input u, the stacked error xi = [e_e; e_c] obeys

    xi_dot = A xi + B u,   y = C xi + D u
    A = -J_h J_w^-1 Jhat_h^T W Lambda,  B = -J_r,  C = [0 I6],  D = 0

where J_h is the true human Jacobian and Jhat_h the human's internal model.
The nonlinear ground truth integrates joint positions and recomputes the
errors from forward kinematics every step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .human import (HumanModel, InternalModel, JacobianBundle, stack_human_jacobian,
                    stack_robot_jacobian, weighted_pinv, resolve_human_velocity)
from .kinematics import (ChainState, KinematicChain, KinematicsError, Pose, pose_error,
                         robot_input_map)

C_OUT = np.hstack([np.zeros((6, 6)), np.eye(6)])
C_OUT.setflags(write=False)


@dataclass(frozen=True)
class ErrorState:
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if xi.size != 12:
            raise ValueError(f"error state must have 12 entries, got {xi.size}")
        object.__setattr__(self, "xi", xi)

    @property
    def e_e(self) -> np.ndarray:
        return self.xi[:6]

    @property
    def e_c(self) -> np.ndarray:
        return self.xi[6:]


@dataclass(frozen=True)
class Targets:
    reach: Pose    # intended hand pose, known only to the human
    relaxed: Pose  # compensation frame pose in the relaxed posture


@dataclass(frozen=True)
class LinearizedSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


def _blockrot(R: np.ndarray, J: np.ndarray) -> np.ndarray:
    return np.vstack([R @ J[:3], R @ J[3:]])


def avatar_internal_jacobian(chain: KinematicChain, state: ChainState) -> np.ndarray:
    """Human's imagined hand Jacobian when piloting a disconnected avatar.

    The pilot treats the avatar arm, frozen in its current configuration,
    as if it hung from their own compensation frame (the shoulder). The
    imagined hand sits at the avatar's current shoulder-to-hand offset
    from the human shoulder; its motion is expressed in the human's
    egocentric axes, identified with the avatar head frame, then rotated
    into the avatar's base coordinates where the reaching error lives.
    """
    for name in ("head", "arm_root"):
        if name not in chain.frames:
            raise KinematicsError(f"disconnected mode needs a {name!r} frame on the avatar")
    root = state.pose("arm_root")
    hand = state.pose("end_effector")
    rel = root.orientation.T @ (hand.position - root.position)
    comp = state.pose("compensation")
    point = comp.position + comp.orientation @ rel
    J = state.point_jacobian(chain.frames["compensation"].joint, point)
    J = J[:, chain.human_indices]
    return _blockrot(state.pose("head").orientation, J)


def evaluate(chain: KinematicChain, mode: InternalModel | str, q, targets: Targets):
    """Errors and Jacobian bundle at configuration q.

    Returns ``(xi, bundle, state)``.
    """
    mode = InternalModel(mode)
    state = chain.at(q)
    x_e = state.pose("end_effector")
    x_c = state.pose("compensation")
    xi = np.concatenate([pose_error(targets.reach, x_e), pose_error(targets.relaxed, x_c)])

    h, r = chain.human_indices, chain.robot_indices
    J_e = state.point_jacobian(chain.frames["end_effector"].joint, x_e.position)
    J_c = state.point_jacobian(chain.frames["compensation"].joint, x_c.position)
    G = robot_input_map(chain, state.q)
    J_he, J_hc = J_e[:, h], J_c[:, h]
    J_re, J_rc = J_e[:, r] @ G, J_c[:, r] @ G
    if mode is InternalModel.CONNECTED:
        bundle = JacobianBundle.connected(J_he, J_hc, J_re, J_rc)
    else:
        if np.any(J_he != 0.0):
            raise KinematicsError("disconnected mode: human joints must not move the end effector")
        bundle = JacobianBundle(J_he, J_hc, avatar_internal_jacobian(chain, state), J_hc, J_re, J_rc)
    return xi, bundle, state


def jacobian_bundle(chain: KinematicChain, mode, q, targets: Targets | None = None) -> JacobianBundle:
    if targets is None:
        st = chain.at(q)
        targets = Targets(st.pose("end_effector"), st.pose("compensation"))
    return evaluate(chain, mode, q, targets)[1]


def assemble_system(model: HumanModel, bundle: JacobianBundle) -> LinearizedSystem:
    """Linearized (A, B, C, D) at the bundle's configuration.

    A uses the true J_h on the left and the internal model inside the
    weighted pseudo-inverse; in disconnected mode the true J_he is zero so
    the first six rows of A vanish.
    """
    J_h = stack_human_jacobian(bundle, internal=False)
    M = weighted_pinv(model, stack_human_jacobian(bundle, internal=True))
    A = -J_h @ M @ model.Lambda
    B = -stack_robot_jacobian(bundle)
    return LinearizedSystem(A, B, C_OUT.copy(), np.zeros((6, B.shape[1])))


def integrate_joints(chain: KinematicChain, q, qh_dot, u, dt: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q_next = q.copy()
    q_next[chain.human_indices] += dt * np.asarray(qh_dot, float)
    q_next[chain.robot_indices] += dt * (robot_input_map(chain, q) @ np.asarray(u, float))
    return q_next


def step_errors(chain: KinematicChain, model: HumanModel, q, targets: Targets, u, dt: float):
    """One explicit Euler step of the coupled human/robot motion.

    Returns ``(q_next, ErrorState)`` with the errors recomputed from forward
    kinematics at ``q_next``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != chain.n_inputs:
        raise ValueError(f"u has {u.size} entries, robot takes {chain.n_inputs} inputs")
    xi, bundle, _ = evaluate(chain, model.internal_model, q, targets)
    qh_dot = resolve_human_velocity(model, bundle, xi[:6], xi[6:])
    q_next = integrate_joints(chain, q, qh_dot, u, dt)
    xi_next = evaluate(chain, model.internal_model, q_next, targets)[0]
    return q_next, ErrorState(xi_next)
