"""Frames, kinematic chains and differential kinematics.

Chains are kinematic trees of single-DoF joints. Every joint has a parent
(the previous joint by default), so an ordinary serial arm needs no extra
bookkeeping while a physically disconnected pilot/avatar pair can live in
one description as two branches hanging off the same base frame.

All poses and Jacobians are expressed in the chain's base frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ORTHO_TOL = 1e-9
AXIS_TOL = 1e-12
REQUIRED_FRAMES = ("end_effector", "compensation")


class KinematicsError(ValueError):
    pass


class UnknownFrameError(KinematicsError, KeyError):
    pass


# --------------------------------------------------------------------------
# SO(3) helpers
# --------------------------------------------------------------------------

def hat(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues' formula for a unit axis."""
    K = hat(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def so3_exp(rotvec: np.ndarray) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=float)
    th = float(np.linalg.norm(rotvec))
    if th < 1e-12:
        K = hat(rotvec)
        return np.eye(3) + K + 0.5 * (K @ K)
    return rot_axis_angle(rotvec / th, th)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of a rotation matrix."""
    (r00, r01, r02), (r10, r11, r12), (r20, r21, r22) = R.tolist()
    w = np.array([r21 - r12, r02 - r20, r10 - r01])
    # atan2 keeps the angle accurate near both 0 and pi, where acos is not
    s = 0.5 * math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    th = math.atan2(s, (r00 + r11 + r22 - 1.0) * 0.5)
    if th < 1e-6:
        # sin(th)/th ~ 1 - th^2/6
        return 0.5 * w * (1.0 + th * th / 6.0)
    if np.pi - th < 1e-6:
        # near pi the antisymmetric part vanishes; take the axis from the
        # symmetric part, sym(R) = cos(th) I + (1 - cos(th)) a a^T
        c = math.cos(th)
        B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if axis @ w < 0:
            axis = -axis
        return axis * th
    return w * (th / (2.0 * s))


def rpy_to_matrix(rpy: Sequence[float]) -> np.ndarray:
    """URDF convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


_I3 = np.eye(3)
_I3.setflags(write=False)
_Z3 = np.zeros(3)
_Z3.setflags(write=False)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------
# Value types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = _frozen(self.position).reshape(3)
        R = _frozen(self.orientation).reshape(3, 3)
        if (np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL
                or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL):
            raise KinematicsError("orientation is not a proper rotation matrix")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", R)

    @classmethod
    def _trusted(cls, position: np.ndarray, orientation: np.ndarray) -> "Pose":
        # skips validation; callers guarantee a proper rotation
        obj = object.__new__(cls)
        object.__setattr__(obj, "position", position)
        object.__setattr__(obj, "orientation", orientation)
        return obj

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(xyz, float), rpy_to_matrix(rpy))

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + self.orientation @ other.position,
                    self.orientation @ other.orientation)

    def offset(self, translation=(0.0, 0.0, 0.0), rotation=(0.0, 0.0, 0.0)) -> "Pose":
        """Displace by a base-frame translation and a base-frame rotation vector."""
        return Pose(self.position + np.asarray(translation, float),
                    so3_exp(np.asarray(rotation, float)) @ self.orientation)


class JointKind(str, Enum):
    REVOLUTE = "revolute-axis"
    PRISMATIC = "prismatic-axis"
    BASE_TRANSLATION = "planar-base-translation"
    BASE_ROTATION = "planar-base-rotation"

    @property
    def rotational(self) -> bool:
        return self in (JointKind.REVOLUTE, JointKind.BASE_ROTATION)


class Owner(str, Enum):
    HUMAN = "human"
    ROBOT = "robot"


class BaseMode(str, Enum):
    FIXED = "fixed"
    UNICYCLE = "unicycle"


@dataclass(frozen=True)
class Joint:
    kind: JointKind
    axis: np.ndarray
    origin: Pose = field(default_factory=Pose.identity)
    owner: Owner = Owner.ROBOT
    parent: int | None = None  # None: previous joint in the list
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", JointKind(self.kind))
        object.__setattr__(self, "owner", Owner(self.owner))
        axis = _frozen(self.axis).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > AXIS_TOL:
            raise KinematicsError(
                f"joint {self.name or '?'}: axis {axis.tolist()} is not unit norm")
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class FrameAttachment:
    joint: int  # -1 attaches to the base
    offset: Pose = field(default_factory=Pose.identity)


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    frames: Mapping[str, FrameAttachment]
    base_mode: BaseMode = BaseMode.FIXED
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "frames", dict(self.frames))
        object.__setattr__(self, "base_mode", BaseMode(self.base_mode))
        n = len(self.joints)
        parents = []
        for i, j in enumerate(self.joints):
            p = i - 1 if j.parent is None else int(j.parent)
            if not -1 <= p < i:
                raise KinematicsError(f"joint {i}: parent {p} must precede it")
            parents.append(p)
        object.__setattr__(self, "_parents", tuple(parents))
        for name in REQUIRED_FRAMES:
            if name not in self.frames:
                raise KinematicsError(f"chain is missing required frame {name!r}")
        for name, att in self.frames.items():
            if not -1 <= att.joint < n:
                raise KinematicsError(f"frame {name!r} attached to unknown joint {att.joint}")
        if self.base_mode is BaseMode.UNICYCLE:
            expect = [(JointKind.BASE_TRANSLATION, (1, 0, 0)),
                      (JointKind.BASE_TRANSLATION, (0, 1, 0)),
                      (JointKind.BASE_ROTATION, (0, 0, 1))]
            if n < 3 or any(
                    self.joints[i].kind is not k or not np.allclose(self.joints[i].axis, a)
                    or self.joints[i].owner is not Owner.ROBOT
                    for i, (k, a) in enumerate(expect)):
                raise KinematicsError(
                    "unicycle chains must start with robot joints x, y (planar "
                    "translation) and theta (planar rotation about z)")
        # ancestor masks: ancestors[i][k] is True if joint k moves joint i's frame
        anc = np.zeros((n, n), dtype=bool)
        for i, p in enumerate(parents):
            if p >= 0:
                anc[i] = anc[p]
            anc[i, i] = True
        anc.setflags(write=False)
        object.__setattr__(self, "_ancestors", anc)
        object.__setattr__(self, "_rotational", np.array([j.kind.rotational for j in self.joints]))
        object.__setattr__(self, "_owner_idx", {
            "human": np.array([i for i, j in enumerate(self.joints) if j.owner is Owner.HUMAN], dtype=int),
            "robot": np.array([i for i, j in enumerate(self.joints) if j.owner is Owner.ROBOT], dtype=int),
        })
        # per-joint constants for Rodrigues' formula
        consts = []
        for j in self.joints:
            K = hat(j.axis)
            ident = (not j.origin.position.any()) and np.array_equal(j.origin.orientation, np.eye(3))
            consts.append((K, K @ K, ident, j.kind.rotational))
        object.__setattr__(self, "_consts", tuple(consts))

    # -- structure ---------------------------------------------------------
    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def parents(self) -> tuple[int, ...]:
        return self._parents

    def indices(self, owner: str | Owner) -> np.ndarray:
        if owner == "all":
            return np.arange(self.n_joints)
        return self._owner_idx[Owner(owner).value]

    @property
    def human_indices(self) -> np.ndarray:
        return self.indices(Owner.HUMAN)

    @property
    def robot_indices(self) -> np.ndarray:
        return self.indices(Owner.ROBOT)

    @property
    def n_inputs(self) -> int:
        """Robot input dimension: joint rates, with (x, y, theta) replaced by (v, omega)."""
        n_r = len(self.robot_indices)
        return n_r - 1 if self.base_mode is BaseMode.UNICYCLE else n_r

    def moves(self, joint: int, frame: str) -> bool:
        att = self._attachment(frame)
        return att.joint >= 0 and bool(self._ancestors[att.joint, joint])

    def _attachment(self, frame: str) -> FrameAttachment:
        try:
            return self.frames[frame]
        except KeyError:
            raise UnknownFrameError(f"unknown frame {frame!r}; chain has {sorted(self.frames)}") from None

    def at(self, q) -> "ChainState":
        return ChainState(self, q)


class ChainState:
    """Joint placements of a chain at one configuration.

    Computing these once per configuration lets poses and Jacobians of
    several frames share the same pass over the tree.
    """

    def __init__(self, chain: KinematicChain, q):
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.size != chain.n_joints:
            raise KinematicsError(f"q has {q.size} entries, chain has {chain.n_joints} joints")
        self.chain = chain
        self.q = q
        Rs, ps, axes = [], [], []
        I3, z3 = _I3, _Z3
        for i, (j, par, (K, K2, ident, rotational)) in enumerate(
                zip(chain.joints, chain.parents, chain._consts)):
            if par < 0:
                Rp, pp = I3, z3
            else:
                Rp, pp = Rs[par], ps[par]
            if ident:
                R0, p0 = Rp, pp
            else:
                R0 = Rp @ j.origin.orientation
                p0 = pp + Rp @ j.origin.position
            a = R0 @ j.axis
            axes.append(a)
            if rotational:
                th = q[i]
                Rs.append(R0 + math.sin(th) * (R0 @ K) + (1.0 - math.cos(th)) * (R0 @ K2))
                ps.append(p0)
            else:
                Rs.append(R0)
                ps.append(p0 + a * q[i])
        self.R = Rs                 # joint frame orientations after motion
        self.p = np.array(ps)       # joint frame origins
        self.axis = np.array(axes)  # joint axes in base coordinates

    def pose(self, frame: str) -> Pose:
        att = self.chain._attachment(frame)
        if att.joint < 0:
            return att.offset
        R, p = self.R[att.joint], self.p[att.joint]
        return Pose._trusted(p + R @ att.offset.position, R @ att.offset.orientation)

    def point_jacobian(self, joint: int, point: np.ndarray) -> np.ndarray:
        """6 x n Jacobian of a point rigidly attached after `joint`."""
        n = self.chain.n_joints
        J = np.zeros((6, n))
        if joint < 0:
            return J
        idx = np.flatnonzero(self.chain._ancestors[joint])
        a = self.axis[idx]
        rot = self.chain._rotational[idx]
        r = point - self.p[idx]
        ax, ay, az = a.T
        rx, ry, rz = r.T
        cross = np.array([ay * rz - az * ry, az * rx - ax * rz, ax * ry - ay * rx])
        J[:3, idx] = np.where(rot, cross, a.T)
        J[3:, idx] = a.T * rot
        return J

    def jacobian(self, frame: str, owner: str = "all") -> np.ndarray:
        att = self.chain._attachment(frame)
        point = self.pose(frame).position
        J = self.point_jacobian(att.joint, point)
        return J[:, self.chain.indices(owner)] if owner != "all" else J


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------

def forward_kinematics(chain: KinematicChain, q, frame: str) -> Pose:
    return chain.at(q).pose(frame)


def geometric_jacobian(chain: KinematicChain, q, frame: str, owner: str = "all") -> np.ndarray:
    """Geometric Jacobian of a named frame.

    Rows 0-2 give the frame origin's linear velocity, rows 3-5 its angular
    velocity, both in base coordinates. Columns follow joint order within
    the owner filter (``"human"``, ``"robot"`` or ``"all"``); joints that do
    not move the frame give zero columns.
    """
    return chain.at(q).jacobian(frame, owner)


def pose_error(desired: Pose, actual: Pose) -> np.ndarray:
    """Six-vector [desired.p - actual.p, log(desired.R actual.R^T)]."""
    return np.concatenate([
        desired.position - actual.position,
        so3_log(desired.orientation @ actual.orientation.T),
    ])


def unicycle_velocity_map(theta: float) -> np.ndarray:
    """Map (v, omega) to (x_dot, y_dot, theta_dot)."""
    return np.array([[np.cos(theta), 0.0], [np.sin(theta), 0.0], [0.0, 1.0]])


def robot_input_map(chain: KinematicChain, q) -> np.ndarray:
    """n_r x n_u matrix taking robot inputs to robot joint rates.

    Identity for fixed-base chains; for unicycle chains the first three
    robot coordinates are driven through :func:`unicycle_velocity_map`.
    """
    n_r = len(chain.robot_indices)
    if chain.base_mode is BaseMode.FIXED:
        return np.eye(n_r)
    q = np.asarray(q, dtype=float)
    G = np.zeros((n_r, n_r - 1))
    G[:3, :2] = unicycle_velocity_map(q[2])
    G[3:, 2:] = np.eye(n_r - 3)
    return G


# --------------------------------------------------------------------------
# Chain files
# --------------------------------------------------------------------------

def _pose_from(d: Mapping | None) -> Pose:
    d = d or {}
    return Pose.from_xyz_rpy(d.get("xyz", d.get("origin_xyz", (0, 0, 0))),
                             d.get("rpy", d.get("origin_rpy", (0, 0, 0))))


def chain_from_dict(d: Mapping) -> KinematicChain:
    """Build a chain from its JSON description.

    ``joints[]`` entries carry ``kind, axis, origin_xyz, origin_rpy, owner``
    and optionally ``parent`` and ``name``. ``frames`` maps a frame name to
    ``{"joint": index, "xyz": [...], "rpy": [...]}``; a joint may also be
    given by name.
    """
    if not isinstance(d, Mapping) or "joints" not in d or "frames" not in d:
        raise KinematicsError("chain description needs 'joints' and 'frames'")
    joints = []
    names = {}
    for i, jd in enumerate(d["joints"]):
        try:
            parent = jd.get("parent")
            if isinstance(parent, str):
                parent = names[parent]
            j = Joint(kind=jd["kind"], axis=jd["axis"],
                      origin=Pose.from_xyz_rpy(jd.get("origin_xyz", (0, 0, 0)),
                                               jd.get("origin_rpy", (0, 0, 0))),
                      owner=jd.get("owner", "robot"), parent=parent,
                      name=jd.get("name", f"j{i}"))
        except KeyError as exc:
            raise KinematicsError(f"joint {i}: missing or unknown field {exc}") from None
        joints.append(j)
        names[j.name] = i
    frames = {}
    for name, fd in d["frames"].items():
        jt = fd.get("joint", -1)
        if isinstance(jt, str):
            if jt not in names:
                raise KinematicsError(f"frame {name!r}: unknown joint {jt!r}")
            jt = names[jt]
        frames[name] = FrameAttachment(int(jt), _pose_from(fd))
    return KinematicChain(tuple(joints), frames, d.get("base_mode", "fixed"), d.get("name", ""))


def load_chain(path: str | Path) -> KinematicChain:
    with open(path) as fh:
        return chain_from_dict(json.load(fh))
