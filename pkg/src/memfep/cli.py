"""Command-line driver: ``memfep {solve,energy,grad,sample,fed}``.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 stuck
sampler, 5 every free-energy point degenerate.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .free_energy import fed_curve, get_protocol, write_fep_csv
from .langevin import (
    Checkpoint,
    ParticleTarget,
    QuadraticTarget,
    StuckState,
    read_trajectory_csv,
    run_chain,
    write_trajectory_csv,
)
from .membrane import SingularSystem, solve_membrane, write_field_csv
from .potentials import direct_potential
from .shape_gradient import fd_check, gradient_from_solution, write_fd_csv

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_STUCK = 4
EXIT_DEGENERATE = 5

log = logging.getLogger("memfep")


def _r(v) -> str:
    return repr(float(v))


def _target(cfg: RunConfig, toy: bool):
    if toy:
        return QuadraticTarget(1.0, 1), np.zeros(1)
    config = cfg.configuration()
    return ParticleTarget(config, cfg.model()), config.coordinates()


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_solve(cfg: RunConfig, args) -> int:
    config = cfg.configuration()
    sol = solve_membrane(config, cfg.physics, cfg.disc)
    write_field_csv(sol, args.out)
    parts = [f"M={_r(sol.energy)}"]
    for i, ((rv, rs), z, b) in enumerate(zip(sol.constraint_residuals(), sol.heights, sol.tilts), 1):
        parts.append(f"Z{i}={_r(z)} beta{i}=({_r(b[0])},{_r(b[1])}) res{i}=({_r(rv)},{_r(rs)})")
    print(" ".join(parts))
    return 0


def cmd_energy(cfg: RunConfig, args) -> int:
    config = cfg.configuration()
    m = solve_membrane(config, cfg.physics, cfg.disc).energy if config.n else 0.0
    p = direct_potential(config, cfg.softwall)[0] if cfg.softwall is not None else 0.0
    print(f"M={_r(m)} P={_r(p)} E={_r(m + p)}")
    return 0


def cmd_grad(cfg: RunConfig, args) -> int:
    config = cfg.configuration()
    sol = solve_membrane(config, cfg.physics, cfg.disc)
    gm = gradient_from_solution(sol)
    gp = direct_potential(config, cfg.softwall)[1] if cfg.softwall is not None else np.zeros_like(gm)
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["component", "grad_M", "grad_P", "grad_E"])
        for k, (a, b) in enumerate(zip(gm, gp)):
            w.writerow([k, _r(a), _r(b), _r(a + b)])
    if not args.no_fd:
        write_fd_csv(fd_check(config, cfg.physics, cfg.disc, steps=(1e-3, 1e-4)), _sibling(out, "_fd.csv"))
    print(" ".join(f"dE/dq{k}={_r(a + b)}" for k, (a, b) in enumerate(zip(gm, gp))))
    return 0


def _sample_one(cfg: RunConfig, toy: bool, out: Path, seed: int, steps: int | None, resume: Path | None) -> Path:
    target, q0 = _target(cfg, toy)
    ck_path = _sibling(out, ".ckpt.json")
    if resume is not None:
        ck = Checkpoint.load(resume)
        params = replace(ck.params, steps=steps or cfg.sampler.steps)
        if params.steps <= ck.step:
            raise ConfigError(f"checkpoint is at step {ck.step}; nothing to do for {params.steps} steps")
        traj = run_chain(target, params=params, resume=ck)
        write_trajectory_csv(traj, out, append=out.exists())
    else:
        params = replace(cfg.sampler, seed=seed, steps=steps or cfg.sampler.steps)
        traj = run_chain(target, q0, params)
        write_trajectory_csv(traj, out)
    traj.checkpoint.save(ck_path)
    redraws = int(traj.redraws.sum())
    print(f"{out}: steps {traj.start}..{traj.start + len(traj) - 1}, redraws {redraws}, checkpoint {ck_path}")
    return out


def _workers(k: int) -> int:
    env = os.environ.get("MEMFEP_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(k, cap))


def cmd_sample(cfg: RunConfig, args) -> int:
    cfg.require("sampler")
    seed = cfg.sampler.seed if args.seed is None else args.seed
    out = Path(args.out)
    resume = Path(args.resume) if args.resume else None
    if args.chains <= 1:
        _sample_one(cfg, args.toy_gaussian, out, seed, args.steps, resume)
        return 0
    if resume is not None:
        raise ConfigError("--resume applies to a single chain")
    outs = [_sibling(out, f"_chain{c}.csv") for c in range(args.chains)]
    with ProcessPoolExecutor(_workers(args.chains)) as ex:
        futs = [
            ex.submit(_sample_one, cfg, args.toy_gaussian, o, seed + c, args.steps, None)
            for c, o in enumerate(outs)
        ]
        for f in futs:
            f.result()
    return 0


def cmd_fed(cfg: RunConfig, args) -> int:
    cfg.require("fep")
    if not args.trajectory:
        raise ConfigError("fed needs --trajectory")
    toy = args.toy_gaussian
    protocol = get_protocol("stiffness-scale" if toy else cfg.fep.protocol)
    target, _ = _target(cfg, toy)
    try:
        traj = read_trajectory_csv(args.trajectory)
    except (OSError, ValueError, IndexError) as e:
        raise ConfigError(f"cannot read trajectory {args.trajectory}: {e}") from e
    if traj.states.shape[1] != target.dim:
        raise ConfigError(f"trajectory has {traj.states.shape[1]} coordinates, config needs {target.dim}")
    result = fed_curve(traj, target, cfg.fep.omegas, protocol, beta=cfg.beta, block_size=cfg.fep.block_size)
    write_fep_csv(result, args.out)
    for e in result.entries:
        flag = " DEGENERATE" if e.degenerate else ""
        print(f"omega={_r(e.omega)} dF={_r(e.dF_hat)} +/- {_r(e.ci_half_width)}{flag}")
        if not e.jensen_ok:
            log.warning("omega=%s violates the Jensen bound", e.omega)
    if all(e.degenerate for e in result.entries if e.omega != 0.0) and any(result.omegas != 0.0):
        print("all estimates degenerate", file=sys.stderr)
        return EXIT_DEGENERATE
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "energy": cmd_energy,
    "grad": cmd_grad,
    "sample": cmd_sample,
    "fed": cmd_fed,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memfep", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--resume")
        p.add_argument("--chains", type=int, default=1)
        p.add_argument("--trajectory")
        p.add_argument("--no-fd", action="store_true", help="skip the finite-difference report")
        p.add_argument("--toy-gaussian", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.toy_gaussian and args.command not in ("sample", "fed"):
            raise ConfigError("--toy-gaussian applies to sample and fed")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystem, np.linalg.LinAlgError) as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except StuckState as e:
        print(f"sampler stuck: {e}", file=sys.stderr)
        return EXIT_STUCK


if __name__ == "__main__":
    sys.exit(main())
