"""Observer and LQR regulator, recomputed on the relinearized system.

The reaching error is not measurable, so it is reconstructed from the
measured compensation error with a continuous Kalman-Bucy style observer

    e_hat_dot = A e_hat + B u + L_obs (y_hat - y),   y_hat = C e_hat
    P_dot     = A P + P A^T - L C P + Q_cov,         L = P C^T R_cov^-1

The gain applied to the innovation (y_hat - y) is L_obs = -L, which is what
makes the estimation error eps = xi - e_hat decay as eps_dot = (A - L C) eps.

The regulator discretizes (A, B) with the simulation step and solves the
discrete algebraic Riccati equation for u = -K e_hat.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .dynamics import LinearizedSystem

log = logging.getLogger(__name__)

DARE_TOL = 1e-10
FIXED_POINT_MAX_ITER = 10_000
FIXED_POINT_DIVERGENCE_WINDOW = 100
DOUBLING_MAX_ITER = 100
DOUBLING_DIVERGENCE_WINDOW = 50


class RiccatiDivergenceError(np.linalg.LinAlgError):
    """The Riccati iteration keeps growing: some penalized mode cannot be stabilized."""


def as_matrix(x, n: int, name: str = "matrix") -> np.ndarray:
    """Scalar -> x I, flat list of n -> diag, nested list -> full (row-major)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1:
        if a.size == n:
            return np.diag(a)
        if a.size == n * n:
            return a.reshape(n, n)
    elif a.shape == (n, n):
        return a.copy()
    raise ValueError(f"{name}: cannot interpret shape {a.shape} as {n}x{n}")


def _psd(M: np.ndarray, name: str, strict: bool):
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    lo = np.linalg.eigvalsh(M).min()
    if lo < -1e-12 or (strict and lo <= 0):
        raise ValueError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")


@dataclass(frozen=True)
class RegulatorConfig:
    Q_cov: np.ndarray
    R_cov: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None
    P0: np.ndarray = field(default_factory=lambda: np.diag(np.r_[np.full(6, 10.0), np.full(6, 0.05)]))
    saturation: np.ndarray | None = None
    dare_method: str = "doubling"

    def __post_init__(self):
        n_u = np.asarray(self.R).shape[0] if np.ndim(self.R) == 2 else np.size(self.R)
        object.__setattr__(self, "Q_cov", as_matrix(self.Q_cov, 12, "Q_cov"))
        object.__setattr__(self, "R_cov", as_matrix(self.R_cov, 6, "R_cov"))
        object.__setattr__(self, "Q", as_matrix(self.Q, 12, "Q"))
        object.__setattr__(self, "R", as_matrix(self.R, n_u, "R"))
        object.__setattr__(self, "P0", as_matrix(self.P0, 12, "P0"))
        S = np.zeros((12, n_u)) if self.S is None else np.asarray(self.S, float).reshape(12, n_u)
        object.__setattr__(self, "S", S)
        if self.saturation is not None:
            sat = np.broadcast_to(np.asarray(self.saturation, float), (n_u,)).copy()
            if np.any(sat <= 0):
                raise ValueError("saturation limits must be positive")
            object.__setattr__(self, "saturation", sat)
        _psd(self.Q_cov, "Q_cov", strict=False)
        _psd(self.R_cov, "R_cov", strict=True)
        _psd(self.Q, "Q", strict=False)
        _psd(self.R, "R", strict=True)
        _psd(self.P0, "P0", strict=False)
        if self.dare_method not in ("doubling", "fixed-point"):
            raise ValueError("dare_method must be 'doubling' or 'fixed-point'")

    @property
    def n_u(self) -> int:
        return self.R.shape[0]

    def with_(self, **kw) -> "RegulatorConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class ObserverState:
    e_hat: np.ndarray
    P: np.ndarray

    @classmethod
    def initial(cls, cfg: RegulatorConfig, e_hat0=None) -> "ObserverState":
        e = np.zeros(12) if e_hat0 is None else np.asarray(e_hat0, float).copy()
        return cls(e, cfg.P0.copy())


# --------------------------------------------------------------------------
# Observer
# --------------------------------------------------------------------------

def observer_gain(P: np.ndarray, C: np.ndarray, R_cov: np.ndarray) -> np.ndarray:
    """Kalman gain L = P C^T R_cov^-1."""
    try:
        cho = scipy.linalg.cho_factor(R_cov)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("R_cov is singular or not positive definite") from None
    # L R = P C^T  <=>  R L^T = C P  (R symmetric)
    return scipy.linalg.cho_solve(cho, C @ P).T


def covariance_step(P, A, C, L, Q_cov, dt: float) -> np.ndarray:
    """Euler step of P_dot = A P + P A^T - L C P + Q_cov, kept symmetric PSD."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    AP = A @ P
    Pn = P + dt * (AP + AP.T - L @ (C @ P) + Q_cov)
    Pn = 0.5 * (Pn + Pn.T)
    try:
        np.linalg.cholesky(Pn)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(Pn)
        if lam.min() < 0.0:
            Pn = (V * np.maximum(lam, 0.0)) @ V.T
            Pn = 0.5 * (Pn + Pn.T)
    return Pn


def observer_derivative(e_hat, sys: LinearizedSystem, u, y, L_obs) -> np.ndarray:
    """Right-hand side A e_hat + B u + L_obs (C e_hat - y)."""
    return sys.A @ e_hat + sys.B @ u + L_obs @ (sys.C @ e_hat - y)


def innovation(obs: ObserverState, sys: LinearizedSystem, y) -> np.ndarray:
    return sys.C @ obs.e_hat - np.asarray(y, float)


def observer_step(obs: ObserverState, sys: LinearizedSystem, u, y_measured,
                  cfg: RegulatorConfig, dt: float) -> ObserverState:
    """Advance estimate and covariance by one Euler step.

    ``y_measured`` is the measured compensation error.
    """
    u = np.asarray(u, dtype=float)
    L = observer_gain(obs.P, sys.C, cfg.R_cov)
    e_next = obs.e_hat + dt * observer_derivative(obs.e_hat, sys, u, y_measured, -L)
    P_next = covariance_step(obs.P, sys.A, sys.C, L, cfg.Q_cov, dt)
    return ObserverState(e_next, P_next)


def steady_state_covariance(A, C, Q_cov, R_cov, dt: float = 1e-3, tol: float = 1e-10,
                            max_steps: int = 2_000_000, P0=None) -> np.ndarray:
    """Fixed point of :func:`covariance_step` for a frozen system.

    Tries the continuous ARE first and falls back to iterating the
    covariance recursion (needed when marginal modes are unobservable).
    """
    try:
        P = scipy.linalg.solve_continuous_are(A.T, C.T, Q_cov, R_cov)
        F = A @ P + P @ A.T - P @ C.T @ np.linalg.solve(R_cov, C @ P) + Q_cov
        if np.all(np.isfinite(P)) and np.abs(F).max() < 1e-8 * max(1.0, np.abs(P).max()):
            return 0.5 * (P + P.T)
    except (np.linalg.LinAlgError, ValueError):
        pass
    P = np.eye(A.shape[0]) if P0 is None else np.array(P0, float)
    for _ in range(max_steps):
        L = observer_gain(P, C, R_cov)
        Pn = covariance_step(P, A, C, L, Q_cov, dt)
        if np.abs(Pn - P).max() < tol:
            return Pn
        P = Pn
    raise RuntimeError("covariance recursion did not settle")


# --------------------------------------------------------------------------
# Regulator
# --------------------------------------------------------------------------

def discretize(sys: LinearizedSystem, cfg: RegulatorConfig, dt: float):
    """Euler discretization of the plant and of the integral cost."""
    n = sys.A.shape[0]
    return (np.eye(n) + dt * sys.A, dt * sys.B, dt * cfg.Q, dt * cfg.R, dt * cfg.S)


def dare_rhs(P, A, B, Q, R, S) -> np.ndarray:
    BtP = B.T @ P
    N = A.T @ BtP.T + S
    return Q + A.T @ P @ A - N @ np.linalg.solve(R + BtP @ B, N.T)


def dare_residual(P, A, B, Q, R, S=None) -> float:
    S = np.zeros(B.shape) if S is None else S
    return float(np.abs(dare_rhs(P, A, B, Q, R, S) - P).max())


def _fixed_point(A, B, Q, R, S, tol, max_iter, P_init):
    P = np.zeros_like(Q) if P_init is None else np.array(P_init, float)
    last, growth = np.inf, 0
    for _ in range(max_iter):
        Pn = dare_rhs(P, A, B, Q, R, S)
        Pn = 0.5 * (Pn + Pn.T)
        res = np.abs(Pn - P).max()
        P = Pn
        if not np.isfinite(res):
            raise RiccatiDivergenceError("Riccati iteration overflowed")
        if res < tol * max(1.0, np.abs(P).max()):
            return P
        growth = growth + 1 if res > last else 0
        if growth >= FIXED_POINT_DIVERGENCE_WINDOW:
            raise RiccatiDivergenceError(
                f"Riccati residual grew for {growth} consecutive iterations")
        last = res
    log.warning("Riccati fixed-point iteration hit %d iterations (residual %.2e)", max_iter, res)
    return P


def _doubling(A, B, Q, R, S, tol, max_iter):
    # remove the cross term: u = v - R^-1 S^T x
    Rinv_St = np.linalg.solve(R, S.T)
    Ak = A - B @ Rinv_St
    Hk = Q - S @ Rinv_St
    Hk = 0.5 * (Hk + Hk.T)
    Gk = B @ np.linalg.solve(R, B.T)
    Gk = 0.5 * (Gk + Gk.T)
    n = A.shape[0]
    I = np.eye(n)
    last, growth = np.inf, 0
    for _ in range(max_iter):
        X = np.linalg.solve(I + Gk @ Hk, np.hstack([Ak, Gk]))
        XA, XG = X[:, :n], X[:, n:]
        with np.errstate(over="ignore", invalid="ignore"):  # overflow is caught below
            Hn = Hk + Ak.T @ Hk @ XA
            Gk = Gk + Ak @ XG @ Ak.T
            Ak = Ak @ XA
        Hn = 0.5 * (Hn + Hn.T)
        Gk = 0.5 * (Gk + Gk.T)
        res = np.abs(Hn - Hk).max()
        Hk = Hn
        if not np.isfinite(res):
            raise RiccatiDivergenceError("Riccati doubling iteration overflowed")
        if res < tol * max(1.0, np.abs(Hk).max()):
            return Hk
        growth = growth + 1 if res > last else 0
        if growth >= DOUBLING_DIVERGENCE_WINDOW:
            raise RiccatiDivergenceError(
                f"Riccati residual grew for {growth} consecutive doubling steps")
        last = res
    raise RiccatiDivergenceError(f"Riccati doubling did not converge in {max_iter} steps")


def solve_dare(A, B, Q, R, S=None, method: str = "doubling", tol: float = DARE_TOL,
               max_iter: int | None = None, P_init=None) -> np.ndarray:
    """Stabilizing-side solution of the discrete Riccati equation

        P = Q + A^T P A - (A^T P B + S)(R + B^T P B)^-1 (B^T P A + S^T)

    obtained as the limit of the value iteration started from zero.
    ``fixed-point`` runs that iteration step by step; ``doubling`` jumps
    to the 2^k-th iterate at step k, which matters when the closed loop
    is sampled finely and the plain iteration crawls. Modes that are both
    uncontrollable and unpenalized are left alone.
    """
    A, B, Q, R = (np.asarray(M, float) for M in (A, B, Q, R))
    S = np.zeros(B.shape) if S is None else np.asarray(S, float)
    if method == "fixed-point":
        return _fixed_point(A, B, Q, R, S, tol, max_iter or FIXED_POINT_MAX_ITER, P_init)
    if method == "doubling":
        return _doubling(A, B, Q, R, S, tol, max_iter or DOUBLING_MAX_ITER)
    raise ValueError(f"unknown DARE method {method!r}")


def dlqr(A, B, Q, R, S=None, method: str = "doubling"):
    """Discrete LQR gain and Riccati solution: u = -K x."""
    S = np.zeros(np.shape(B)) if S is None else np.asarray(S, float)
    P = solve_dare(A, B, Q, R, S, method=method)
    BtP = B.T @ P
    K = np.linalg.solve(R + BtP @ B, BtP @ A + S.T)
    return K, P


def lqr_gain(sys: LinearizedSystem, cfg: RegulatorConfig, dt: float, return_riccati: bool = False):
    """LQR gain K (n_u x 12) on the Euler-discretized system."""
    if cfg.n_u != sys.n_u:
        raise ValueError(f"R is {cfg.n_u}x{cfg.n_u} but the system has {sys.n_u} inputs")
    Ad, Bd, Qd, Rd, Sd = discretize(sys, cfg, dt)
    K, P = dlqr(Ad, Bd, Qd, Rd, Sd, method=cfg.dare_method)
    return (K, P) if return_riccati else K


def control_input(K: np.ndarray, e_hat: np.ndarray, saturation=None) -> np.ndarray:
    u = -(K @ e_hat)
    if saturation is not None:
        u = np.clip(u, -saturation, saturation)
    return u


def closed_loop_matrix(plant: LinearizedSystem, model: LinearizedSystem, K, L_kf, dt: float) -> np.ndarray:
    """One-step map of [xi; e_hat] under frozen gains.

    ``plant`` drives the true error, ``model`` is what observer and
    regulator believe; ``L_kf`` is the Kalman gain (applied as -L_kf on
    the innovation).
    """
    A, B, C = plant.A, plant.B, plant.C
    Ah, Bh = model.A, model.B
    top = np.hstack([A, -B @ K])
    bot = np.hstack([L_kf @ C, Ah - Bh @ K - L_kf @ C])
    return np.eye(24) + dt * np.vstack([top, bot])
