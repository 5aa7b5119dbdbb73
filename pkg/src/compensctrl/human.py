"""Simulated human compensatory control.

The human moves their own joints to shrink the reaching error and the
compensation error at once. The two goals usually conflict, so the joint
velocity is the weighted least-squares compromise

    qh_dot = (Jh^T W Jh)^-1 Jh^T W Lambda xi,   W = diag(w I, (1 - w) I)

where Jh is the human's *internal model* of how their joints move the hand
and the compensation frame.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)

SINGULAR_RTOL = 1e-10


class InternalModel(str, Enum):
    CONNECTED = "connected"
    DISCONNECTED = "disconnected-avatar"


class SingularHumanJacobianError(np.linalg.LinAlgError):
    """Jh^T W Jh is numerically singular: some modeled human joint moves neither frame."""

    def __init__(self, sigma_min: float, sigma_max: float):
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        super().__init__(
            f"human Jacobian J_w singular: sigma_min={sigma_min:.3e} "
            f"(sigma_max={sigma_max:.3e}); remove redundant human joints")


def as_gain(g, n: int = 6) -> np.ndarray:
    """Scalar, diagonal list or full matrix -> n x n array."""
    g = np.asarray(g, dtype=float)
    if g.ndim == 0:
        return float(g) * np.eye(n)
    if g.ndim == 1:
        if g.size != n:
            raise ValueError(f"expected {n} diagonal entries, got {g.size}")
        return np.diag(g)
    if g.shape != (n, n):
        raise ValueError(f"expected {n}x{n} gain, got {g.shape}")
    return g


def _check_spd(M: np.ndarray, name: str):
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True)
class HumanModel:
    lambda_e: np.ndarray
    lambda_c: np.ndarray
    w: float = 0.5
    internal_model: InternalModel = InternalModel.CONNECTED
    on_singular: str = "pinv"  # or "raise"

    def __post_init__(self):
        le, lc = as_gain(self.lambda_e), as_gain(self.lambda_c)
        _check_spd(le, "lambda_e")
        _check_spd(lc, "lambda_c")
        if not 0.0 <= float(self.w) <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if self.on_singular not in ("pinv", "raise"):
            raise ValueError("on_singular must be 'pinv' or 'raise'")
        le.setflags(write=False)
        lc.setflags(write=False)
        object.__setattr__(self, "lambda_e", le)
        object.__setattr__(self, "lambda_c", lc)
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "internal_model", InternalModel(self.internal_model))

    @property
    def Lambda(self) -> np.ndarray:
        L = np.zeros((12, 12))
        L[:6, :6] = self.lambda_e
        L[6:, 6:] = self.lambda_c
        return L

    @property
    def W(self) -> np.ndarray:
        return np.diag(np.r_[np.full(6, self.w), np.full(6, 1.0 - self.w)])

    def scaled(self, ratio_e: float, ratio_c: float) -> "HumanModel":
        """Same model with gains multiplied by the given ratios."""
        return HumanModel(ratio_e * self.lambda_e, ratio_c * self.lambda_c, self.w,
                          self.internal_model, self.on_singular)


@dataclass(frozen=True)
class JacobianBundle:
    """True and internal-model Jacobians at one configuration.

    ``J_he``/``J_hc`` are the real maps from human joints to the hand and
    compensation frames; ``Jhat_he``/``Jhat_hc`` are what the human believes
    them to be. ``J_re``/``J_rc`` map robot *inputs* (joint rates, or
    (v, omega, arm rates) on a unicycle base) to the same frames.
    """
    J_he: np.ndarray
    J_hc: np.ndarray
    Jhat_he: np.ndarray
    Jhat_hc: np.ndarray
    J_re: np.ndarray
    J_rc: np.ndarray

    def __post_init__(self):
        n_h = self.J_he.shape[1]
        for name in ("J_he", "J_hc", "Jhat_he", "Jhat_hc"):
            M = getattr(self, name)
            if M.shape != (6, n_h):
                raise ValueError(f"{name} has shape {M.shape}, expected (6, {n_h})")
        if self.J_re.shape[0] != 6 or self.J_rc.shape != self.J_re.shape:
            raise ValueError("robot Jacobians must both be 6 x n_u")

    @classmethod
    def connected(cls, J_he, J_hc, J_re, J_rc) -> "JacobianBundle":
        return cls(J_he, J_hc, J_he, J_hc, J_re, J_rc)

    @property
    def n_h(self) -> int:
        return self.J_he.shape[1]

    @property
    def n_u(self) -> int:
        return self.J_re.shape[1]


def _stack(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    if top.shape[0] != 6 or bottom.shape[0] != 6 or top.shape[1] != bottom.shape[1]:
        raise ValueError(f"cannot stack {top.shape} over {bottom.shape}: need two 6 x k blocks")
    return np.vstack([top, bottom])


def stack_human_jacobian(bundle: JacobianBundle, internal: bool = True) -> np.ndarray:
    """[Jhat_he; Jhat_hc] (or the true [J_he; J_hc] with ``internal=False``)."""
    if internal:
        return _stack(bundle.Jhat_he, bundle.Jhat_hc)
    return _stack(bundle.J_he, bundle.J_hc)


def stack_robot_jacobian(bundle: JacobianBundle) -> np.ndarray:
    return _stack(bundle.J_re, bundle.J_rc)


def weighted_pinv(model: HumanModel, Jhat_h: np.ndarray) -> np.ndarray:
    """n_h x 12 matrix M with qh_dot = M @ (Lambda xi); M = J_w^-1 Jhat_h^T W."""
    W = model.W
    JtW = Jhat_h.T @ W
    Jw = JtW @ Jhat_h
    s = np.linalg.svd(Jw, compute_uv=False)
    if s[-1] < SINGULAR_RTOL * s[0] or s[0] == 0.0:
        if model.on_singular == "raise":
            raise SingularHumanJacobianError(float(s[-1]), float(s[0]))
        log.warning("J_w near singular (sigma_min=%.3e); using pseudo-inverse", s[-1])
        return np.linalg.pinv(Jw, rcond=SINGULAR_RTOL) @ JtW
    return np.linalg.solve(Jw, JtW)


def resolve_human_velocity(model: HumanModel, bundle: JacobianBundle,
                           e_e: np.ndarray, e_c: np.ndarray) -> np.ndarray:
    """Human joint velocity minimizing the weighted reaching/compensation residual."""
    xi = np.concatenate([np.asarray(e_e, float), np.asarray(e_c, float)])
    M = weighted_pinv(model, stack_human_jacobian(bundle))
    return M @ (model.Lambda @ xi)


def human_cost(model: HumanModel, Jhat_h: np.ndarray, xi: np.ndarray, qh_dot: np.ndarray) -> float:
    r = Jhat_h @ qh_dot - model.Lambda @ xi
    return float(r @ model.W @ r)
