"""Fast invariant suite behind ``compensctrl check``.

Each check returns a :class:`CheckResult`. The functions under test are
passed in as arguments so a caller can swap in a deliberately broken
implementation and watch the matching check fail.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .dynamics import C_OUT, assemble_system, jacobian_bundle
from .estimation import dare_residual, solve_dare
from .human import HumanModel, InternalModel, JacobianBundle, resolve_human_velocity
from .kinematics import (KinematicsError, geometric_jacobian, forward_kinematics, load_chain,
                         so3_log)
from .scenario import data_path

AXIS_TOL = 1e-12
FD_STEP = 1e-6
FD_TOL = 1e-6
LS_RTOL = 1e-9
RICCATI_TOL = 1e-8
EIG_TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


def default_chain_paths() -> list[Path]:
    return sorted(data_path("chains").glob("*.json"))


def check_axis_norms(chain_paths: Iterable[Path]) -> CheckResult:
    """Every joint axis in every chain file has unit length."""
    bad = []
    for p in chain_paths:
        try:
            d = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            bad.append(f"{Path(p).name}: unreadable ({exc})")
            continue
        for i, j in enumerate(d.get("joints", [])):
            axis = np.asarray(j.get("axis", [0, 0, 1]), float)
            err = abs(np.linalg.norm(axis) - 1.0)
            if err > AXIS_TOL:
                bad.append(f"{Path(p).name} joint {j.get('name', i)!r} |axis|={np.linalg.norm(axis):.6g}")
    return CheckResult("joint-axis-unit-norm", not bad, "; ".join(bad))


def _fd_jacobian(chain, q, frame: str, h: float = FD_STEP) -> np.ndarray:
    J = np.zeros((6, q.size))
    for i in range(q.size):
        dq = np.zeros_like(q)
        dq[i] = h
        xp, xm = forward_kinematics(chain, q + dq, frame), forward_kinematics(chain, q - dq, frame)
        J[:3, i] = (xp.position - xm.position) / (2 * h)
        J[3:, i] = so3_log(xp.orientation @ xm.orientation.T) / (2 * h)
    return J


def check_jacobian_fd(chain_paths: Iterable[Path], n_configs: int = 20, seed: int = 0,
                      jacobian_fn: Callable = geometric_jacobian) -> CheckResult:
    """Geometric Jacobians agree with central differences of forward kinematics."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for p in chain_paths:
        try:
            chain = load_chain(p)
        except KinematicsError as exc:
            return CheckResult("jacobian-finite-difference", False, f"{Path(p).name}: {exc}")
        for _ in range(n_configs):
            q = rng.uniform(-1.0, 1.0, chain.n_joints)
            for frame in chain.frames:
                err = np.abs(jacobian_fn(chain, q, frame) - _fd_jacobian(chain, q, frame)).max()
                if err > worst:
                    worst, where = err, f"{Path(p).name}/{frame}"
    ok = worst < FD_TOL
    return CheckResult("jacobian-finite-difference", ok, f"max error {worst:.2e} ({where})")


def random_bundle(rng, n_h: int = 7, n_u: int = 7) -> JacobianBundle:
    J = rng.normal(size=(12, n_h))
    R = rng.normal(size=(12, n_u))
    return JacobianBundle.connected(J[:6], J[6:], R[:6], R[6:])


def normal_equations_oracle(model: HumanModel, bundle: JacobianBundle, xi: np.ndarray) -> np.ndarray:
    """Weighted least squares through a QR of sqrt(W) J."""
    J = np.vstack([bundle.Jhat_he, bundle.Jhat_hc])
    sw = np.sqrt(np.diag(model.W))
    Q, R = np.linalg.qr(sw[:, None] * J)
    return np.linalg.solve(R, Q.T @ (sw * (model.Lambda @ xi)))


def check_ls_oracle(n_instances: int = 100, seed: int = 1,
                    velocity_fn: Callable = resolve_human_velocity) -> CheckResult:
    """Human velocity matches an independent weighted least-squares solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        bundle = random_bundle(rng)
        model = HumanModel(rng.uniform(0.1, 3.0, 6), rng.uniform(0.05, 1.0, 6), rng.uniform(0.05, 0.95))
        xi = rng.normal(size=12)
        ref = normal_equations_oracle(model, bundle, xi)
        got = velocity_fn(model, bundle, xi[:6], xi[6:])
        worst = max(worst, np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-300))
    return CheckResult("least-squares-oracle", worst < LS_RTOL, f"max relative error {worst:.2e}")


def check_riccati(n_instances: int = 20, seed: int = 2, dare_fn: Callable = solve_dare) -> CheckResult:
    """DARE solutions on random stabilizable systems leave a tiny residual."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n, m = 6, 3
        A = np.eye(n) + 0.05 * rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        G = rng.normal(size=(n, n))
        Q = G @ G.T / n
        R = np.eye(m) * rng.uniform(0.5, 2.0)
        P = dare_fn(A, B, Q, R)
        worst = max(worst, dare_residual(P, A, B, Q, R))
    return CheckResult("riccati-residual", worst < RICCATI_TOL, f"max residual {worst:.2e}")


def check_marginal_stability(chain_paths: Iterable[Path] | None = None, n_configs: int = 20,
                             seed: int = 3) -> CheckResult:
    """Connected-mode A never has eigenvalues in the open right half plane;
    disconnected A has a zero reaching block; C and D keep their fixed shape."""
    rng = np.random.default_rng(seed)
    paths = list(chain_paths) if chain_paths is not None else default_chain_paths()
    worst, problems = -np.inf, []
    for p in paths:
        chain = load_chain(p)
        modes = [InternalModel.CONNECTED]
        if "head" in chain.frames and "arm_root" in chain.frames:
            modes = [InternalModel.DISCONNECTED]
        for _ in range(n_configs):
            q = rng.uniform(-0.8, 0.8, chain.n_joints)
            model = HumanModel(rng.uniform(0.1, 3.0, 6), rng.uniform(0.05, 1.0, 6),
                               rng.uniform(0.05, 0.95))
            for mode in modes:
                model = HumanModel(model.lambda_e, model.lambda_c, model.w, mode)
                sys = assemble_system(model, jacobian_bundle(chain, mode, q))
                if not (np.array_equal(sys.C, C_OUT) and not sys.D.any()):
                    problems.append(f"{Path(p).name}: C/D structure")
                if mode is InternalModel.CONNECTED:
                    worst = max(worst, np.linalg.eigvals(sys.A).real.max())
                elif sys.A[:6].any():
                    problems.append(f"{Path(p).name}: disconnected A has nonzero reaching rows")
    if worst > EIG_TOL:
        problems.append(f"max Re(eig A) = {worst:.2e}")
    detail = "; ".join(problems) if problems else f"max Re(eig A) = {worst:.2e}"
    return CheckResult("marginal-stability", not problems, detail)


def run_checks(chain_paths: Iterable[Path] | None = None, velocity_fn: Callable | None = None,
               jacobian_fn: Callable | None = None, dare_fn: Callable | None = None) -> list[CheckResult]:
    """Run every check; unset functions resolve to this module's names at call time."""
    velocity_fn = velocity_fn or resolve_human_velocity
    jacobian_fn = jacobian_fn or geometric_jacobian
    dare_fn = dare_fn or solve_dare
    paths = list(chain_paths) if chain_paths is not None else default_chain_paths()
    results = [check_axis_norms(paths)]
    # the remaining checks need loadable chains
    loadable = results[0].passed
    results.append(check_jacobian_fd(paths, jacobian_fn=jacobian_fn) if loadable else
                   CheckResult("jacobian-finite-difference", False, "skipped: invalid chain"))
    results.append(check_ls_oracle(velocity_fn=velocity_fn))
    results.append(check_riccati(dare_fn=dare_fn))
    results.append(check_marginal_stability(paths) if loadable else
                   CheckResult("marginal-stability", False, "skipped: invalid chain"))
    return results
