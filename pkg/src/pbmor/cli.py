"""Command-line entry point for generation, reduction, verification, sweeps.

Subcommands::

    bench-gen   write a benchmark system as manifest + Matrix Market files
    reduce      build a reduced model from an interpolation config
    verify      check the interpolation conditions of a (full, reduced) pair
    sweep-freq  kernel magnitudes or full-vs-reduced errors over a grid
    sweep-time  time-domain output errors of matched simulations
    simulate    integrate one system and write the trajectory

Every run writes its artifacts plus a ``run.json`` embedding the resolved
configuration and package version into the output directory, which is
created atomically; identical configurations yield byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys as _sys
import tempfile

import numpy as np

from . import __version__
from .bench import BenchmarkConfig, make_benchmark
from .manifest import read_json, read_system_manifest, write_json, write_system_manifest
from .matfun import SolveCache
from .mor import InterpolationSpec, project, reduce_system
from .sim import SimProblem, parse_signal, simulate
from .verify import (check_hermite, check_lagrange, check_param_gradient,
                     error_sweep_freq, error_sweep_time)

DEFAULT_VERIFY_TOL = 1e-8
DEFAULT_DERIV_TOL = 1e-6
DEFAULT_PGRAD_TOL = 1e-7


def _thread_cap(value):
    if value:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(value))


class _RunDir:
    """Collects artifacts in a staging directory, then renames it in place."""

    def __init__(self, target, force=False):
        self.target = target
        self.force = force
        parent = os.path.dirname(os.path.abspath(target)) or "."
        os.makedirs(parent, exist_ok=True)
        self.staging = tempfile.mkdtemp(prefix=".pbmor-run-", dir=parent)

    def path(self, name):
        return os.path.join(self.staging, name)

    def commit(self):
        if os.path.exists(self.target):
            if not self.force:
                shutil.rmtree(self.staging)
                raise FileExistsError(f"output directory {self.target} exists "
                                      "(pass --force to replace)")
            shutil.rmtree(self.target)
        os.replace(self.staging, self.target)

    def abort(self):
        shutil.rmtree(self.staging, ignore_errors=True)


def _load_system(args_or_cfg):
    """Resolve a system from --manifest or a config's system section."""
    if isinstance(args_or_cfg, dict):
        section = args_or_cfg
        if "manifest" in section:
            return read_system_manifest(section["manifest"]), {"manifest": section["manifest"]}
        cfg = BenchmarkConfig(
            benchmark=section["benchmark"],
            n=section.get("n", 1000),
            seed=section.get("seed", 0),
            params=section.get("params", {}),
        )
        return make_benchmark(cfg), {
            "benchmark": cfg.benchmark, "n": cfg.n, "seed": cfg.seed,
            "params": dict(cfg.params),
        }
    raise TypeError("expected a config dict")


def _spec_from_config(cfg):
    if "chains" in cfg or "v_chains" in cfg:
        return InterpolationSpec.from_dict({
            "mu_points": cfg["mu_points"],
            "v_chains": cfg.get("v_chains", cfg.get("chains", [])),
            "w_chains": cfg.get("w_chains", []),
            "sidedness": cfg.get("sidedness", "two-sided-identical"),
            "realify": cfg.get("realify"),
            "rank_tol": cfg.get("rank_tol", 1e-12),
        })
    points = [complex(re, im) for re, im in cfg["points"]]
    return InterpolationSpec.from_point_set(
        points=points,
        mu_points=[tuple(mu) for mu in cfg["mu_points"]],
        depth=cfg.get("depth", 1),
        orders=cfg.get("orders", 0),
        sidedness=cfg.get("sidedness", "two-sided-identical"),
        realify=cfg.get("realify"),
        rank_tol=cfg.get("rank_tol", 1e-12),
    )


def _write_run_log(rundir, command, config, summary):
    write_json(rundir.path("run.json"), {
        "command": command,
        "config": config,
        "version": __version__,
        "summary": summary,
    })


def _cmd_bench_gen(args):
    rundir = _RunDir(args.out, force=args.force)
    try:
        cfg = {"benchmark": args.id, "n": args.n, "seed": args.seed, "params": {}}
        system, resolved = _load_system(cfg)
        manifest = write_system_manifest(system, rundir.staging, name=args.name)
        _write_run_log(rundir, "bench-gen", resolved,
                       {"manifest": os.path.basename(manifest),
                        "n": system.n, "m": system.m, "p": system.p, "d": system.d})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    print(f"wrote {args.out}")
    return 0


def _reduce_into(rundir, config):
    system, system_cfg = _load_system(config["system"])
    spec = _spec_from_config(config)
    cache = SolveCache()
    reduced = reduce_system(system, spec, cache=cache)
    write_system_manifest(reduced.system, rundir.staging, name="reduced")
    np.save(rundir.path("basis_V.npy"), reduced.V)
    np.save(rundir.path("basis_W.npy"), reduced.W)
    provenance = {
        "spec": spec.to_dict(),
        "system": system_cfg,
        "order": reduced.order,
        "realified": reduced.realified,
        "notes": list(reduced.notes),
        "enforced_conditions": _enforced_families(spec),
    }
    write_json(rundir.path("provenance.json"), provenance)
    return system, spec, reduced, system_cfg


def _enforced_families(spec):
    families = []
    if spec.sidedness != "one-sided-W":
        families.append("input-side values")
    if spec.sidedness != "one-sided-V":
        families.append("output-side values")
    if spec.sidedness in ("two-sided", "two-sided-identical"):
        families.append("mixed values")
    if any(any(c.orders) for c in spec.v_chains + spec.w_chains):
        families.append("frequency derivatives")
    if spec.sidedness == "two-sided-identical":
        families.append("parameter gradients")
    if spec.sidedness == "one-sided-V":
        families.append("dropped: output-side and mixed conditions (W = V)")
    if spec.sidedness == "one-sided-W":
        families.append("dropped: input-side and mixed conditions (V = W)")
    return families


def _cmd_reduce(args):
    config = read_json(args.config)
    rundir = _RunDir(args.out, force=args.force)
    try:
        system, spec, reduced, system_cfg = _reduce_into(rundir, config)
        _write_run_log(rundir, "reduce", config,
                       {"order": reduced.order, "realified": reduced.realified})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    print(f"reduced model of order {reduced.order} written to {args.out}")
    return 0


def _cmd_verify(args):
    config = read_json(args.config)
    rundir = _RunDir(args.out, force=args.force)
    try:
        system, spec, reduced, system_cfg = _reduce_into(rundir, config)
        caches = (SolveCache(), SolveCache())
        tol = config.get("tolerances", {})
        value_tol = tol.get("value", DEFAULT_VERIFY_TOL)
        deriv_tol = tol.get("derivative", DEFAULT_DERIV_TOL)
        pgrad_tol = tol.get("param_gradient", DEFAULT_PGRAD_TOL)
        reports = {"value": check_lagrange(system, reduced, spec, tol=value_tol,
                                           caches=caches)}
        if any(any(c.orders) for c in spec.v_chains + spec.w_chains):
            reports["derivative"] = check_hermite(system, reduced, spec,
                                                  tol=deriv_tol, caches=caches)
        if spec.sidedness == "two-sided-identical":
            reports["param_gradient"] = check_param_gradient(
                system, reduced, spec, tol=pgrad_tol, caches=caches)
        passed = all(r.all_passed for r in reports.values())
        payload = {name: r.to_dict() for name, r in reports.items()}
        write_json(rundir.path("verification.json"), payload)
        summary = {name: r.summary() for name, r in reports.items()}
        _write_run_log(rundir, "verify", config, {"passed": passed, **summary})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    for name, report in reports.items():
        s = report.summary()
        print(f"{name}: {'pass' if s['passed'] else 'FAIL'} "
              f"(max relative deviation {s['max_rel_dev']:.3e})")
    return 0 if passed else 1


def _log_grid(lo, hi, count):
    return list(np.logspace(np.log10(lo), np.log10(hi), count))


def _cmd_sweep_freq(args):
    config = read_json(args.config)
    rundir = _RunDir(args.out, force=args.force)
    try:
        sweep_cfg = config.get("sweep", {})
        level = sweep_cfg.get("level", 1)
        omega = sweep_cfg.get("omega_grid")
        if omega is None:
            omega = _log_grid(sweep_cfg.get("omega_min", 1e-4),
                              sweep_cfg.get("omega_max", 1e4),
                              sweep_cfg.get("omega_count", 100))
        mu_grid = [tuple(mu) for mu in sweep_cfg["mu_grid"]]
        system, spec, reduced, _ = _reduce_into(rundir, config)
        result = error_sweep_freq(system, reduced, omega, mu_grid, level=level,
                                  caches=(SolveCache(), SolveCache()))
        result.write_csv(rundir.path(f"freq_error_g{level}.csv"))
        _write_run_log(rundir, "sweep-freq", config,
                       {"level": level, "max_rel_error": result.max_rel,
                        "max_abs_error": result.max_abs,
                        "flagged_nodes": len(result.flagged)})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    print(f"max relative level-{level} error {result.max_rel:.3e} "
          f"({len(result.flagged)} flagged nodes)")
    return 0


def _make_sim_builder(sim_cfg):
    signals = sim_cfg["input"]
    if isinstance(signals, str):
        signals = [signals]
    channels = [parse_signal(text) for text in signals]

    def u(t):
        return np.array([c(t) for c in channels])

    def build(system, mu):
        return SimProblem(system=system, mu=mu, u=u,
                          t0=sim_cfg.get("t0", 0.0), tf=sim_cfg.get("tf", 1.0),
                          h=sim_cfg.get("h", 1e-2))

    return build


def _cmd_sweep_time(args):
    config = read_json(args.config)
    rundir = _RunDir(args.out, force=args.force)
    try:
        sim_cfg = config["sim"]
        mu_grid = [tuple(mu) for mu in sim_cfg["mu_grid"]]
        system, spec, reduced, _ = _reduce_into(rundir, config)
        result = error_sweep_time(system, reduced, _make_sim_builder(sim_cfg), mu_grid)
        result.write_csv(rundir.path("time_error.csv"))
        _write_run_log(rundir, "sweep-time", config,
                       {"max_rel_error": result.max_rel,
                        "max_abs_error": result.max_abs,
                        "flagged_nodes": len(result.flagged)})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    print(f"max relative time-domain error {result.max_rel:.3e} "
          f"({len(result.flagged)} flagged nodes)")
    return 0


def _cmd_simulate(args):
    config = read_json(args.config)
    rundir = _RunDir(args.out, force=args.force)
    try:
        system, system_cfg = _load_system(config["system"])
        sim_cfg = config["sim"]
        build = _make_sim_builder(sim_cfg)
        mu = tuple(sim_cfg["mu"])
        result = simulate(build(system, mu))
        with open(rundir.path("trajectory.csv"), "w", encoding="utf-8") as fh:
            fh.write(",".join(["t"] + [f"y_{j + 1}" for j in range(system.p)]) + "\n")
            for idx, t in enumerate(result.t):
                vals = [repr(float(np.real(result.y[j, idx]))) for j in range(system.p)]
                fh.write(",".join([repr(float(t))] + vals) + "\n")
        _write_run_log(rundir, "simulate", config,
                       {"steps": len(result.t) - 1,
                        "final_output": [float(np.real(v)) for v in result.y[:, -1]]})
        rundir.commit()
    except Exception:
        rundir.abort()
        raise
    print(f"trajectory with {len(result.t) - 1} steps written to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pbmor",
        description="Structure-preserving interpolatory reduction of "
                    "parametric bilinear systems",
    )
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("PBMOR_THREADS", "0")),
                        help="cap worker/BLAS threads (default: environment)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-gen", help="generate a benchmark system")
    p.add_argument("--id", required=True, choices=["heated-rod-delay", "msd-chain", "random"])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="system")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_bench_gen)

    for name, func, descr in (
        ("reduce", _cmd_reduce, "build a reduced-order model"),
        ("verify", _cmd_verify, "reduce and check interpolation conditions"),
        ("sweep-freq", _cmd_sweep_freq, "frequency-domain error sweep"),
        ("sweep-time", _cmd_sweep_time, "time-domain error sweep"),
        ("simulate", _cmd_simulate, "integrate one system"),
    ):
        p = sub.add_parser(name, help=descr)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output run directory")
        p.add_argument("--force", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _thread_cap(args.threads)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
