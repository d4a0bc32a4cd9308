"""Command line pipeline: tune, compensate, simulate, report.

Exit codes: 0 on success, 1 on solver or simulation failure, 2 on a bad
configuration or command line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from hdpid import lmi, metrics, tuner
from hdpid.config import ConfigError, RunConfig, load_config
from hdpid.controller import GainSet, apply_compensation
from hdpid.simulator import Schedule, SimulationError, read_trajectory_csv, run_closed_loop

log = logging.getLogger("hdpid")


class PipelineError(RuntimeError):
    pass


def _f(v) -> Optional[float]:
    v = float(v)
    return v if math.isfinite(v) else None


def _mat(M) -> list:
    return [[_f(v) for v in row] for row in np.atleast_2d(M)]


def _dump_json(obj, path: Path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    path.write_text(text, encoding="utf-8")


def _eigs(J) -> list:
    w = np.linalg.eigvals(J)
    w = w[np.lexsort((w.imag, w.real))]
    return [[_f(z.real), _f(z.imag)] for z in w]


def origin_blocks(cfg: RunConfig) -> tuner.VelocityBlocks:
    return tuner.velocity_blocks(cfg.plant, cfg.x_ref, cfg.u_ref, cfg.K_d)


def tune_report(cfg: RunConfig, hinf: bool = False):
    """Solve stage one for the configured plant; returns ``(result, report, ok)``."""
    b0 = origin_blocks(cfg)
    res = tuner.tune(b0, cfg.gain_bound, cfg.solver)
    if res.solver_status == lmi.Status.INFEASIBLE:
        raise PipelineError("gain problem is infeasible")
    n = cfg.plant.n
    L_dt = tuner.disturbance_bound(b0, cfg.plant.L_ddot, cfg.ref_accel)
    report = {
        "problem": "evp1",
        "K": _mat(res.K),
        "K_p": _mat(res.K[:, :n]),
        "K_i": _mat(res.K[:, n:]),
        "lambda_star": _f(res.lambda_star),
        "lambda_star_negative": bool(res.lambda_star < 0),
        "solver_status": res.solver_status.value,
        "iterations": res.solution.iterations,
        "max_eig_at_solution": _f(res.solution.max_eig_at_solution),
        "spectral_abscissa_at_origin": _f(res.spectral_abscissa_at_origin),
        "eigenvalues_at_origin": _eigs(b0.closed_loop(res.K)),
        "reference_point": {"x": _mat(cfg.x_ref)[0], "u": _mat(cfg.u_ref)[0]},
        "certificate": {
            "eps_P": cfg.eps_P,
            "eps_Q": cfg.eps_Q,
            "L_dtilde": _f(L_dt),
            "origin_margin": _f(tuner.origin_margin(b0, res.K, cfg.eps_Q / cfg.eps_P)),
        },
    }
    ok = res.solver_status == lmi.Status.OPTIMAL
    if hinf:
        h = tuner.tune(b0, cfg.gain_bound, cfg.solver, hinf_eps_P=cfg.eps_P)
        section = {"solver_status": h.solver_status.value, "lambda_star": _f(h.lambda_star)}
        if h.solver_status == lmi.Status.INFEASIBLE:
            section["phase1_value"] = _f(h.solution.max_eig_at_solution)
            section["diagnostic"] = (
                "bounded-real problem has no strictly feasible point; its (1,1) block "
                "L_K has a structurally zero lower-right block, so L_K < 0 is impossible"
            )
            ok = False
        else:
            section["K"] = _mat(h.K)
            section["spectral_abscissa_at_origin"] = _f(h.spectral_abscissa_at_origin)
        report["hinf"] = section
    return res, report, ok


def base_gains(cfg: RunConfig) -> tuple[GainSet, Optional[dict]]:
    if cfg.K_p is not None:
        return GainSet(cfg.K_p, cfg.K_i, cfg.K_d), None
    res, report, _ = tune_report(cfg)
    return GainSet.from_stacked(res.K, cfg.K_d), report


def initial_compensation(cfg: RunConfig, gains: GainSet):
    """Stage-two compensation at the initial operating point."""
    if cfg.dK_p is not None:
        return cfg.dK_p, cfg.dK_i, None
    be = tuner.velocity_blocks(cfg.plant, cfg.x0, cfg.u0, cfg.K_d)
    dKp, dKi, lam, _ = tuner.compensate(
        be, origin_blocks(cfg), gains.K, cfg.eps_P, cfg.eps_Q, cfg.gain_bound, cfg.solver
    )
    return dKp, dKi, lam


def eig_rows(cfg: RunConfig, gains: GainSet, comp: GainSet) -> list[tuple]:
    b0 = origin_blocks(cfg)
    rows = []
    for label, G in (("K", gains), ("K+dK", comp)):
        for i, (re, im) in enumerate(_eigs(b0.closed_loop(G.K))):
            rows.append((label, i, re, im))
    return rows


def eigs_csv(rows, path: Optional[Path] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["matrix", "index", "real", "imag"])
    for label, i, re, im in rows:
        w.writerow([label, i, repr(re), repr(im)])
    text = buf.getvalue()
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def run_pair(cfg: RunConfig, gains: GainSet, seed: int, schedule: Optional[Schedule] = None):
    """Uncompensated and compensated runs for one seed."""
    traj_K = run_closed_loop(cfg.plant, gains, cfg.sim_config(seed=seed, schedule=Schedule("none")))
    if cfg.dK_p is not None:
        comp = apply_compensation(gains, cfg.dK_p, cfg.dK_i)
        traj_c = run_closed_loop(cfg.plant, comp, cfg.sim_config(seed=seed, schedule=Schedule("none")))
    else:
        sched = cfg.schedule if schedule is None else schedule
        if sched.kind == "none":
            sched = Schedule("once")
        traj_c = run_closed_loop(cfg.plant, gains, cfg.sim_config(seed=seed, schedule=sched))
    return traj_K, traj_c


def _run_one(cfg: RunConfig, gains: GainSet, seed: int, out: Path, schedule) -> dict:
    traj_K, traj_c = run_pair(cfg, gains, seed, schedule)
    out.mkdir(parents=True, exist_ok=True)
    traj_K.to_csv(out / "run_K.csv")
    traj_c.to_csv(out / "run_KdK.csv")
    rows = metrics.compare_report(traj_K, traj_c)
    metrics.report_csv(rows, out / "metrics.csv")
    if traj_c.compensations:
        _, dKp, dKi, _ = traj_c.compensations[0]
    else:
        dKp, dKi = cfg.dK_p, cfg.dK_i
    comp = apply_compensation(gains, dKp, dKi)
    eigs_csv(eig_rows(cfg, gains, comp), out / "eigs.csv")
    _dump_json(
        {
            "seed": seed,
            "K_p": _mat(gains.K_p),
            "K_i": _mat(gains.K_i),
            "K_d": _mat(gains.K_d),
            "compensations": [
                {"t": _f(t), "dK_p": _mat(p), "dK_i": _mat(i), "lambda_star": _f(lam)}
                for t, p, i, lam in traj_c.compensations
            ]
            or [{"t": 0.0, "dK_p": _mat(dKp), "dK_i": _mat(dKi), "lambda_star": None}],
        },
        out / "run.json",
    )
    return {"seed": seed, "rows": rows}


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds or min(seeds) < 0:
        raise ValueError(f"bad seed list {text!r}")
    return seeds


def cmd_tune(cfg: RunConfig, args) -> int:
    _, report, ok = tune_report(cfg, hinf=args.hinf)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(report, cfg.out_dir / "tune.json")
    print(f"lambda* = {report['lambda_star']:.6g}  status = {report['solver_status']}")
    print(f"spectral abscissa of J_K(0) = {report['spectral_abscissa_at_origin']:.6g}")
    if "hinf" in report:
        h = report["hinf"]
        print(f"bounded-real problem: status = {h['solver_status']}")
        if h.get("diagnostic"):
            print(f"error: {h['diagnostic']}", file=sys.stderr)
    return 0 if ok else 1


def cmd_run(cfg: RunConfig, args) -> int:
    gains, report = base_gains(cfg)
    if report is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        _dump_json(report, cfg.out_dir / "tune.json")
    schedule = Schedule.parse(args.schedule) if args.schedule else None
    if args.seeds:
        seeds = parse_seeds(args.seeds)
        outs = [cfg.out_dir / f"seed_{s}" for s in seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_run_one, [cfg] * len(seeds), [gains] * len(seeds), seeds, outs, [schedule] * len(seeds)))
        else:
            results = [_run_one(cfg, gains, s, o, schedule) for s, o in zip(seeds, outs)]
        for r in results:
            print(f"seed {r['seed']}")
            print(metrics.format_table(r["rows"]))
            print()
    else:
        r = _run_one(cfg, gains, cfg.seed, cfg.out_dir, schedule)
        print(metrics.format_table(r["rows"]))
    return 0


def cmd_compare(cfg: RunConfig, args) -> int:
    a = read_trajectory_csv(args.before)
    b = read_trajectory_csv(args.after)
    rows = metrics.compare_report(a, b)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    metrics.report_csv(rows, cfg.out_dir / "metrics.csv")
    print(metrics.format_table(rows))
    return 0


def cmd_eigs(cfg: RunConfig, args) -> int:
    gains, _ = base_gains(cfg)
    dKp, dKi, _ = initial_compensation(cfg, gains)
    rows = eig_rows(cfg, gains, apply_compensation(gains, dKp, dKi))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    sys.stdout.write(eigs_csv(rows, cfg.out_dir / "eigs.csv"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file (defaults: the fixed-wing experiment)")
    common.add_argument("--seed", type=int, help="disturbance seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--hinf", action="store_true", help="also solve the bounded-real gain problem")
    common.add_argument("--schedule", help="compensation schedule: none, once, every:N or threshold:X")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for --seeds")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hdpid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tune", parents=[common], help="solve the gain problem and write tune.json")
    r = sub.add_parser("run", parents=[common], help="simulate K and K+dK, write CSVs and metrics")
    r.add_argument("--seeds", help="seed list such as 0-9 or 0,3,5")
    c = sub.add_parser("compare", parents=[common], help="metrics table for two trajectory CSVs")
    c.add_argument("before", type=Path)
    c.add_argument("after", type=Path)
    sub.add_parser("eigs", parents=[common], help="eigenvalues of J_K(0) and J_{K+dK}(0)")
    return p


COMMANDS = {"tune": cmd_tune, "run": cmd_run, "compare": cmd_compare, "eigs": cmd_eigs}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        over = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            over["seed"] = args.seed
        if args.out is not None:
            over["out_dir"] = args.out
        if args.schedule:
            over["schedule"] = Schedule.parse(args.schedule)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if getattr(args, "seeds", None):
            parse_seeds(args.seeds)
        cfg = cfg.with_overrides(**over)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except (PipelineError, lmi.LmiInfeasible, SimulationError, tuner.SingularIKd) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
