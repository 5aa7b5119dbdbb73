"""Command-line entry point: ``compensctrl run | sweep | check``.

Exit codes: 0 ok, 1 failed check, 2 bad arguments or scenario file,
3 simulation failure, 4 file-system error.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from .checks import run_checks
from .scenario import (Scenario, ScenarioError, SimulationError, load_scenario, log_grid,
                       run_trial, stability_sweep, write_sweep)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SIM, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("compensctrl")


def _setup_logging():
    level = os.environ.get("COMPENSCTRL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _on_off(s: str) -> bool:
    s = s.lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")


def _grid(s: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)[xX](\d+)", s)
    if not m or int(m[1]) < 1 or int(m[2]) < 1:
        raise argparse.ArgumentTypeError(f"grid must look like 9x9, got {s!r}")
    return int(m[1]), int(m[2])


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--dt", type=float, help="integration step [s]")
    p.add_argument("--horizon", type=float, help="simulated duration [s]")
    p.add_argument("--w", type=float, help="human weight between reaching and compensation")
    p.add_argument("--lambda-ratio", type=float, nargs=2, metavar=("RE", "RC"),
                   help="gain ratios assumed by observer and regulator")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compensctrl",
                                 description="Compensation-driven control of human-robot chains")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate scenarios and write traces")
    r.add_argument("scenarios", nargs="+", help="scenario JSON files or built-in names (sim1, ...)")
    r.add_argument("--controller", type=_on_off, help="on|off")
    _add_overrides(r)

    s = sub.add_parser("sweep", help="gain-mismatch stability sweep on the linearized loop")
    s.add_argument("scenario", help="base scenario (built-in: fig13)")
    s.add_argument("--grid", type=_grid, default=(9, 9), help="RxC log grid over [1e-2, 1e2] (default 9x9)")
    _add_overrides(s)

    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--chain", type=Path, action="append",
                   help="chain file to check (repeatable; default: shipped chains)")
    return ap


def _overrides(args) -> dict:
    kw = {"dt": args.dt, "horizon": args.horizon, "w": args.w, "seed": args.seed,
          "controller": getattr(args, "controller", None)}
    if args.lambda_ratio is not None:
        kw["lambda_ratio"] = tuple(args.lambda_ratio)
    return kw


def _load_all(names, kw) -> list[Scenario]:
    # everything is parsed and validated before the first trial starts
    return [load_scenario(n).with_overrides(**kw) for n in names]


def summary_line(s: Scenario, trace, wall: float) -> str:
    ee, ec = trace.norms("e_e")[-1], trace.norms("e_c")[-1]
    return (f"{s.name}: final |e_e|={ee:.3e} |e_c|={ec:.3e} "
            f"steps={len(trace) - 1} wall={wall:.2f}s")


def _run_one(s: Scenario):
    t0 = time.perf_counter()
    tr = run_trial(s)
    return tr, time.perf_counter() - t0


def cmd_run(args) -> int:
    scenarios = _load_all(args.scenarios, _overrides(args))
    names = [s.name for s in scenarios]
    stems = [n if names.count(n) == 1 else f"{n}_{i}" for i, n in enumerate(names)]
    if args.jobs > 1 and len(scenarios) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futs = [pool.submit(_run_one, s) for s in scenarios]
            results = []
            for f in futs:
                try:
                    results.append(f.result())
                except SimulationError as exc:
                    results.append(exc)
    else:
        results = []
        for s in scenarios:
            try:
                results.append(_run_one(s))
            except SimulationError as exc:
                results.append(exc)
    code = EXIT_OK
    for s, stem, res in zip(scenarios, stems, results):
        if isinstance(res, Exception):
            print(f"{s.name}: FAILED {res}", file=sys.stderr)
            code = EXIT_SIM
            continue
        trace, wall = res
        trace.write(args.out, stem)
        print(summary_line(s, trace, wall))
    return code


def cmd_sweep(args) -> int:
    kw = _overrides(args)
    base = load_scenario(args.scenario).with_overrides(linearized=True, **kw)
    rows, cols = args.grid
    t0 = time.perf_counter()
    cells = stability_sweep(base, log_grid(rows), log_grid(cols), jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{base.name}_sweep.csv"
    write_sweep(cells, path)
    n_stable = sum(c.stable for c in cells)
    agree = sum(c.stable == c.oracle_stable for c in cells)
    print(f"{base.name}: {n_stable}/{len(cells)} cells stable, "
          f"{agree}/{len(cells)} agree with eigenvalue oracle, "
          f"wall={time.perf_counter() - t0:.2f}s -> {path}")
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(args.chain)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", invalid="ignore")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "check": cmd_check}[args.cmd]
    try:
        return handler(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
