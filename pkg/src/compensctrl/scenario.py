"""Complete trials: human + robot + observer + regulator.

A scenario file (JSON) names a chain, the human model, the regulator
tuning, the start configuration and the reaching target as an offset from
the starting hand pose. :func:`run_trial` closes the loop

    Jacobians at q -> human velocity -> LQR gain -> u -> observer -> integrate

relinearizing everything at each step. Linearized scenarios freeze the
Jacobians at the start configuration instead.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .dynamics import (Targets, assemble_system, evaluate, integrate_joints)
from .estimation import (ObserverState, RegulatorConfig, RiccatiDivergenceError, as_matrix,
                         closed_loop_matrix, control_input, lqr_gain, observer_gain, observer_step,
                         steady_state_covariance)
from .human import (HumanModel, InternalModel, resolve_human_velocity, stack_human_jacobian,
                    weighted_pinv)
from .kinematics import (BaseMode, KinematicChain, KinematicsError, chain_from_dict,
                         robot_input_map)

log = logging.getLogger(__name__)

DEFAULT_W = 0.5
EQUILIBRIUM_TOL = 1e-4
EQUILIBRIUM_STEPS = 50
SWEEP_BLOWUP = 10.0
SWEEP_SETTLE = 1e-3

_TOP_KEYS = {"name", "description", "chain", "mode", "linearized", "human", "regulator",
             "initial_q", "target", "horizon", "dt", "controller", "seed",
             "initial_estimate_std", "early_stop", "lambda_ratio", "on_singular"}


class ScenarioError(ValueError):
    """Malformed scenario description."""


class SimulationError(RuntimeError):
    """A trial failed; ``step`` and ``time`` say where."""

    def __init__(self, msg: str, step: int, time: float):
        super().__init__(f"{msg} (step {step}, t={time:.4f} s)")
        self.step = step
        self.time = time


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("compensctrl").joinpath("data", *parts)))


def builtin_scenarios() -> list[str]:
    return sorted(p.stem for p in data_path("scenarios").glob("*.json"))


def resolve_scenario_path(name: str | Path) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    cand = data_path("scenarios", stem + ".json")
    if cand.exists():
        return cand
    raise FileNotFoundError(f"no scenario file {name!r} (built-ins: {', '.join(builtin_scenarios())})")


# --------------------------------------------------------------------------
# Scenario
# --------------------------------------------------------------------------

def _vec(x, n: int | None, what: str) -> np.ndarray:
    try:
        a = np.asarray(x, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what}: expected numbers, got {x!r}") from None
    if n is not None and a.size != n:
        raise ScenarioError(f"{what}: expected {n} values, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ScenarioError(f"{what}: non-finite entries")
    return a


def _num(x, what: str, positive: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(f"{what}: expected a number, got {x!r}")
    if positive and not x > 0:
        raise ScenarioError(f"{what}: must be positive, got {x}")
    return float(x)


@dataclass(frozen=True)
class Scenario:
    name: str
    chain: KinematicChain
    mode: InternalModel
    human: HumanModel
    regulator: RegulatorConfig
    initial_q: np.ndarray
    target_translation: np.ndarray
    target_rotation: np.ndarray
    horizon: float
    dt: float
    controller: bool = True
    linearized: bool = False
    lambda_ratio: tuple[float, float] = (1.0, 1.0)
    seed: int = 0
    initial_estimate_std: float = 0.0
    early_stop: bool = True
    w_defaulted: bool = False
    config: dict = field(default_factory=dict, compare=False)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-9))

    @property
    def estimator_model(self) -> HumanModel:
        """Human model as assumed by the observer and regulator."""
        return self.human.scaled(*self.lambda_ratio)

    def targets(self) -> Targets:
        st = self.chain.at(self.initial_q)
        return Targets(st.pose("end_effector").offset(self.target_translation, self.target_rotation),
                       st.pose("compensation"))

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with config-level overrides (dt, horizon, controller, w, lambda_ratio, seed)."""
        cfg = copy.deepcopy(self.config)
        for key, val in kw.items():
            if val is None:
                continue
            if key == "w":
                cfg.setdefault("human", {})["w"] = val
            elif key in ("dt", "horizon", "controller", "lambda_ratio", "seed",
                         "initial_estimate_std", "early_stop", "linearized"):
                cfg[key] = list(val) if isinstance(val, tuple) else val
            else:
                raise ScenarioError(f"unknown override {key!r}")
        return scenario_from_dict(cfg, base_dir=None, chain=self.chain)


def regulator_from_dict(d: dict, n_u: int) -> RegulatorConfig:
    d = dict(d or {})
    unknown = set(d) - {"P0", "Q_cov", "R_cov", "Q", "R", "S", "saturation", "dare_method"}
    if unknown:
        raise ScenarioError(f"regulator: unknown keys {sorted(unknown)}")
    try:
        kw = {
            "Q_cov": as_matrix(d.get("Q_cov", 1.0), 12, "Q_cov"),
            "R_cov": as_matrix(d.get("R_cov", 0.01), 6, "R_cov"),
            "Q": as_matrix(d.get("Q", [0.0] * 6 + [10.0] * 3 + [0.1] * 3), 12, "Q"),
            "R": as_matrix(d.get("R", 1.0), n_u, "R"),
        }
        if "P0" in d:
            kw["P0"] = as_matrix(d["P0"], 12, "P0")
        if "S" in d:
            S = np.asarray(d["S"], float)
            kw["S"] = np.zeros((12, n_u)) if S.ndim == 0 and S == 0 else S.reshape(12, n_u)
        if d.get("saturation") is not None:
            kw["saturation"] = d["saturation"]
        if "dare_method" in d:
            kw["dare_method"] = d["dare_method"]
        return RegulatorConfig(**kw)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"regulator: {exc}") from None


def scenario_from_dict(d: Any, base_dir: Path | None = None,
                       chain: KinematicChain | None = None) -> Scenario:
    if not isinstance(d, dict) or not d:
        raise ScenarioError("scenario must be a non-empty JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
    missing = [k for k in ("chain", "initial_q", "target", "horizon", "dt") if k not in d]
    if missing:
        raise ScenarioError(f"scenario is missing required keys {missing}")
    cfg = copy.deepcopy(d)

    if chain is None:
        chain_ref = d["chain"]
        try:
            if isinstance(chain_ref, dict):
                chain = chain_from_dict(chain_ref)
            else:
                p = Path(chain_ref)
                if not p.is_absolute() and base_dir is not None and (base_dir / p).exists():
                    p = base_dir / p
                elif not p.exists():
                    p = data_path("chains", p.name)
                with open(p) as fh:
                    chain_dict = json.load(fh)
                chain = chain_from_dict(chain_dict)
                cfg["chain"] = chain_dict
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"chain: {exc}") from None
        except KinematicsError as exc:
            raise ScenarioError(f"chain: {exc}") from None

    try:
        mode = InternalModel(d.get("mode", "connected"))
    except ValueError:
        raise ScenarioError(f"mode must be 'connected' or 'disconnected-avatar', got {d.get('mode')!r}") from None
    if mode is InternalModel.DISCONNECTED:
        st = chain.at(np.zeros(chain.n_joints))
        J = st.jacobian("end_effector", "human")
        if np.any(J != 0):
            raise ScenarioError("disconnected mode: human joints must not move the end effector")

    hd = d.get("human", {})
    if not isinstance(hd, dict):
        raise ScenarioError("human: expected an object")
    unknown = set(hd) - {"lambda_e", "lambda_c", "w"}
    if unknown:
        raise ScenarioError(f"human: unknown keys {sorted(unknown)}")
    w_defaulted = "w" not in hd
    if w_defaulted:
        log.warning("scenario %s does not set w; using default w=%.2f", d.get("name", "?"), DEFAULT_W)
    try:
        human = HumanModel(hd.get("lambda_e", 1.0), hd.get("lambda_c", 0.1),
                           _num(hd.get("w", DEFAULT_W), "human.w"), mode,
                           d.get("on_singular", "pinv"))
    except ValueError as exc:
        raise ScenarioError(f"human: {exc}") from None

    regulator = regulator_from_dict(d.get("regulator", {}), chain.n_inputs)

    q0 = _vec(d["initial_q"], chain.n_joints, "initial_q")
    tgt = d["target"]
    if not isinstance(tgt, dict):
        raise ScenarioError("target: expected {translation, rotation}")
    trans = _vec(tgt.get("translation", [0, 0, 0]), 3, "target.translation")
    rot = _vec(tgt.get("rotation", [0, 0, 0]), 3, "target.rotation")
    if np.linalg.norm(rot) >= math.pi:
        raise ScenarioError("target.rotation must have norm below pi")

    horizon = _num(d["horizon"], "horizon", positive=True)
    dt = _num(d["dt"], "dt", positive=True)
    if dt > horizon:
        raise ScenarioError("dt must not exceed horizon")
    ratio = d.get("lambda_ratio", [1.0, 1.0])
    ratio = tuple(_vec(ratio, 2, "lambda_ratio"))
    if min(ratio) <= 0:
        raise ScenarioError("lambda_ratio entries must be positive")
    for key in ("controller", "linearized", "early_stop"):
        if key in d and not isinstance(d[key], bool):
            raise ScenarioError(f"{key}: expected true/false")
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioError("seed: expected an integer")

    return Scenario(
        name=str(d.get("name", "scenario")), chain=chain, mode=mode, human=human,
        regulator=regulator, initial_q=q0, target_translation=trans, target_rotation=rot,
        horizon=horizon, dt=dt, controller=d.get("controller", True),
        linearized=d.get("linearized", False), lambda_ratio=ratio, seed=seed,
        initial_estimate_std=_num(d.get("initial_estimate_std", 0.0), "initial_estimate_std"),
        early_stop=d.get("early_stop", True), w_defaulted=w_defaulted, config=cfg)


def load_scenario(path: str | Path) -> Scenario:
    path = resolve_scenario_path(path)
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from None
    return scenario_from_dict(d, base_dir=path.parent)


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

@dataclass
class SimulationTrace:
    t: np.ndarray
    q_h: np.ndarray
    q_r: np.ndarray
    e_e: np.ndarray
    e_c: np.ndarray
    e_hat: np.ndarray
    u: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def xi(self) -> np.ndarray:
        return np.hstack([self.e_e, self.e_c])

    @property
    def estimate_error(self) -> np.ndarray:
        return np.linalg.norm(self.xi - self.e_hat, axis=1)

    def norms(self, which: str) -> np.ndarray:
        return np.linalg.norm(getattr(self, which), axis=1)

    def columns(self) -> list[str]:
        cols = ["t"]
        cols += [f"qh_{i}" for i in range(self.q_h.shape[1])]
        cols += [f"qr_{i}" for i in range(self.q_r.shape[1])]
        for pre in ("ee", "ec"):
            cols += [f"{pre}_{c}" for c in ("tx", "ty", "tz", "rx", "ry", "rz")]
        cols += [f"ehat_{i}" for i in range(12)]
        cols += [f"u_{i}" for i in range(self.u.shape[1])]
        return cols

    def table(self) -> np.ndarray:
        return np.hstack([self.t[:, None], self.q_h, self.q_r, self.e_e, self.e_c, self.e_hat, self.u])

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.columns())
            for row in self.table():
                wr.writerow([repr(float(x)) for x in row])

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.metadata.get("scenario", "trace")
        csv_path, meta_path = out / f"{stem}.csv", out / f"{stem}.json"
        self.write_csv(csv_path)
        with open(meta_path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return csv_path, meta_path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=_jsonable, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _metadata(s: Scenario, n_records: int, early: bool) -> dict:
    return {
        "scenario": s.name,
        "package_version": __version__,
        "config_hash": config_hash(s.config),
        "config": s.config,
        "mode": s.mode.value,
        "linearized": s.linearized,
        "controller": s.controller,
        "w": s.human.w,
        "w_defaulted": s.w_defaulted,
        "lambda_e": np.diag(s.human.lambda_e),
        "lambda_c": np.diag(s.human.lambda_c),
        "lambda_ratio": list(s.lambda_ratio),
        "dt": s.dt,
        "horizon": s.horizon,
        "records": n_records,
        "early_stopped": early,
    }


class _Recorder:
    def __init__(self, n_max: int, n_h: int, n_r: int, n_u: int):
        self.t = np.empty(n_max)
        self.q = np.empty((n_max, n_h + n_r))
        self.xi = np.empty((n_max, 12))
        self.e_hat = np.empty((n_max, 12))
        self.u = np.empty((n_max, n_u))
        self.n = 0
        self.n_h = n_h

    def add(self, t, q_h, q_r, xi, e_hat, u):
        k = self.n
        self.t[k] = t
        self.q[k, :self.n_h] = q_h
        self.q[k, self.n_h:] = q_r
        self.xi[k] = xi
        self.e_hat[k] = e_hat
        self.u[k] = u
        self.n += 1

    def trace(self, metadata) -> SimulationTrace:
        n, h = self.n, self.n_h
        return SimulationTrace(self.t[:n].copy(), self.q[:n, :h].copy(), self.q[:n, h:].copy(),
                               self.xi[:n, :6].copy(), self.xi[:n, 6:].copy(),
                               self.e_hat[:n].copy(), self.u[:n].copy(), metadata)


def _initial_estimate(s: Scenario) -> np.ndarray:
    if s.initial_estimate_std > 0:
        return np.random.default_rng(s.seed).normal(0.0, s.initial_estimate_std, 12)
    return np.zeros(12)


# --------------------------------------------------------------------------
# Trials
# --------------------------------------------------------------------------

def run_trial(s: Scenario) -> SimulationTrace:
    """Simulate one scenario and return its full trace."""
    if s.linearized:
        return _run_linear(s)
    chain, cfg, dt = s.chain, s.regulator, s.dt
    h, r = chain.human_indices, chain.robot_indices
    targets = s.targets()
    model_hat = s.estimator_model
    q = s.initial_q.copy()
    obs = ObserverState.initial(cfg, _initial_estimate(s))
    n = s.n_steps
    rec = _Recorder(n + 1, h.size, r.size, chain.n_inputs)
    zero_u = np.zeros(chain.n_inputs)
    quiet = 0
    early = False
    for k in range(n + 1):
        t = k * dt
        try:
            xi, bundle, _ = evaluate(chain, s.mode, q, targets)
            sys_hat = assemble_system(model_hat, bundle)
            if s.controller:
                K = lqr_gain(sys_hat, cfg, dt)
                u = control_input(K, obs.e_hat, cfg.saturation)
            else:
                u = zero_u
            rec.add(t, q[h], q[r], xi, obs.e_hat, u)
            if not np.all(np.isfinite(xi)) or not np.all(np.isfinite(obs.e_hat)):
                raise FloatingPointError("state became non-finite")
            if s.early_stop:
                quiet = quiet + 1 if np.abs(xi).max() < EQUILIBRIUM_TOL else 0
                if quiet >= EQUILIBRIUM_STEPS:
                    early = k < n
                    break
            if k == n:
                break
            qh_dot = resolve_human_velocity(s.human, bundle, xi[:6], xi[6:])
            obs = observer_step(obs, sys_hat, u, xi[6:], cfg, dt)
            q = integrate_joints(chain, q, qh_dot, u, dt)
        except (np.linalg.LinAlgError, FloatingPointError, KinematicsError) as exc:
            raise SimulationError(f"{s.name}: {exc}", k, t) from exc
    return rec.trace(_metadata(s, rec.n, early))


def run_avatar_trial(s: Scenario) -> SimulationTrace:
    """Pilot/avatar trial: disconnected internal model on a unicycle-base robot."""
    if s.mode is not InternalModel.DISCONNECTED:
        raise ScenarioError("avatar trials need mode 'disconnected-avatar'")
    if s.chain.base_mode is not BaseMode.UNICYCLE:
        raise ScenarioError("avatar trials need a unicycle-base chain")
    return run_trial(s)


def linearize(s: Scenario):
    """Frozen (plant, estimator-model) systems at the start configuration, plus xi(0)."""
    targets = s.targets()
    xi0, bundle, _ = evaluate(s.chain, s.mode, s.initial_q, targets)
    return assemble_system(s.human, bundle), assemble_system(s.estimator_model, bundle), xi0, bundle


def _run_linear(s: Scenario) -> SimulationTrace:
    chain, cfg, dt = s.chain, s.regulator, s.dt
    h, r = chain.human_indices, chain.robot_indices
    plant, model_sys, xi, bundle = linearize(s)
    qh_map = weighted_pinv(s.human, stack_human_jacobian(bundle)) @ s.human.Lambda
    G = robot_input_map(chain, s.initial_q)
    K = lqr_gain(model_sys, cfg, dt) if s.controller else None
    q = s.initial_q.copy()
    obs = ObserverState.initial(cfg, _initial_estimate(s))
    n = s.n_steps
    rec = _Recorder(n + 1, h.size, r.size, chain.n_inputs)
    zero_u = np.zeros(chain.n_inputs)
    quiet = 0
    early = False
    A, B = plant.A, plant.B
    for k in range(n + 1):
        u = control_input(K, obs.e_hat, cfg.saturation) if K is not None else zero_u
        rec.add(k * dt, q[h], q[r], xi, obs.e_hat, u)
        if s.early_stop:
            quiet = quiet + 1 if np.abs(xi).max() < EQUILIBRIUM_TOL else 0
            if quiet >= EQUILIBRIUM_STEPS:
                early = k < n
                break
        if k == n:
            break
        obs = observer_step(obs, model_sys, u, xi[6:], cfg, dt)
        q = q.copy()
        q[h] += dt * (qh_map @ xi)
        q[r] += dt * (G @ u)
        xi = xi + dt * (A @ xi + B @ u)
    return rec.trace(_metadata(s, rec.n, early))


def run_many(scenarios: Sequence[Scenario], jobs: int = 1) -> list:
    """Run trials, possibly in worker processes. Failed trials come back as exceptions."""
    if jobs <= 1 or len(scenarios) <= 1:
        out = []
        for s in scenarios:
            try:
                out.append(run_trial(s))
            except Exception as exc:  # reported per trial by the caller
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(run_trial, s) for s in scenarios]
        out = []
        for f in futs:
            try:
                out.append(f.result())
            except Exception as exc:
                out.append(exc)
        return out


# --------------------------------------------------------------------------
# Stability sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    ratio_e: float
    ratio_c: float
    stable: bool
    peak_ratio: float
    final_ratio: float
    spectral_radius: float

    @property
    def oracle_stable(self) -> bool:
        return self.spectral_radius < 1.0


def log_grid(n: int, lo: float = 1e-2, hi: float = 1e2) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def frozen_closed_loop(base: Scenario, ratio_e: float, ratio_c: float) -> np.ndarray:
    """One-step map of [xi; e_hat] with gains designed on the scaled human model.

    The plant keeps the scenario's true gains; observer and regulator use
    Lambda_hat = ratio * Lambda. The observer gain is frozen at its
    steady-state covariance.
    """
    s = base.with_overrides(lambda_ratio=(ratio_e, ratio_c))
    plant, model_sys, _, _ = linearize(s)
    K = lqr_gain(model_sys, s.regulator, s.dt)
    P = steady_state_covariance(model_sys.A, model_sys.C, s.regulator.Q_cov, s.regulator.R_cov, dt=s.dt)
    L = observer_gain(P, model_sys.C, s.regulator.R_cov)
    return closed_loop_matrix(plant, model_sys, K, L, s.dt)


def classify(xi_norms: np.ndarray, stride: int = 1) -> tuple[bool, float, float]:
    """Stable iff the error never exceeds 10x its start and ends below 1e-3 of it."""
    x = np.asarray(xi_norms)
    idx = np.r_[np.arange(0, x.size, stride), x.size - 1]
    x = x[np.unique(idx)]
    peak = float(x.max() / x[0])
    final = float(x[-1] / x[0])
    return (peak < SWEEP_BLOWUP and final < SWEEP_SETTLE), peak, final


SWEEP_BLOCK = 100


def frozen_trajectory_norms(M: np.ndarray, z0: np.ndarray, n_steps: int,
                            block: int = SWEEP_BLOCK) -> np.ndarray:
    """max-norm of the error half of z_k = M^k z0 for k = 0..n_steps.

    Steps ``block`` samples at a time through a stack of precomputed powers
    of M. Stops early (holding the last value) once the error has grown
    a millionfold.
    """
    n = M.shape[0]
    powers = np.empty((block, n, n))
    powers[0] = M
    for i in range(1, block):
        powers[i] = M @ powers[i - 1]
    stack = powers.reshape(block * n, n)
    norms = np.empty(n_steps + 1)
    norms[0] = np.abs(z0[:12]).max()
    z, k = np.asarray(z0, float), 0
    while k < n_steps:
        m = min(block, n_steps - k)
        zs = (stack[:m * n] @ z).reshape(m, n)
        norms[k + 1:k + 1 + m] = np.abs(zs[:, :12]).max(axis=1)
        z, k = zs[-1], k + m
        if not np.isfinite(norms[k]) or norms[k] > 1e6 * norms[0]:
            norms[k + 1:] = norms[k] if np.isfinite(norms[k]) else np.inf
            break
    return norms


def _sweep_cell(base: Scenario, re: float, rc: float) -> SweepCell:
    try:
        M = frozen_closed_loop(base, re, rc)
    except RiccatiDivergenceError:
        # no stabilizing regulator for this gain estimate
        return SweepCell(float(re), float(rc), False, math.inf, math.inf, math.inf)
    _, _, xi0, _ = linearize(base)
    z = np.concatenate([xi0, _initial_estimate(base)])
    norms = frozen_trajectory_norms(M, z, base.n_steps)
    stable, peak, final = classify(norms)
    rho = float(np.abs(np.linalg.eigvals(M)).max())
    return SweepCell(float(re), float(rc), stable, peak, final, rho)


def stability_sweep(base: Scenario, ratios_e: Iterable[float], ratios_c: Iterable[float],
                    jobs: int = 1) -> list[SweepCell]:
    """Classify closed-loop stability over a grid of gain-estimate ratios."""
    if not base.linearized:
        base = base.with_overrides(linearized=True)
    cells = [(float(a), float(b)) for a in ratios_e for b in ratios_c]
    if jobs <= 1:
        return [_sweep_cell(base, a, b) for a, b in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(_sweep_cell, base, a, b) for a, b in cells]
        return [f.result() for f in futs]


def write_sweep(cells: Sequence[SweepCell], path: str | Path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["ratio_e", "ratio_c", "stable"])
        for c in cells:
            wr.writerow([repr(c.ratio_e), repr(c.ratio_c), int(c.stable)])
