"""Command-line front end: ``deom run``, ``deom fit-bath``, ``deom count``."""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from .bath import build_mode_table, write_mode_table
from .config import PRESETS, RunConfig, ddo_estimate, parse_config
from .errors import CapacityError, ConfigError, ConvergenceError, DEOMError
from .hierarchy import ddo_count
from .model import build_dqd_hamiltonian, build_fock_operators, build_single_dot_hamiltonian
from .observables import (default_omega_grid, impurity_spectral_function, noise_spectrum, solve_system,
                          spectrum_derivative, steady_current, total_noise)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_CAPACITY, EXIT_OTHER = 0, 2, 3, 4, 1


def build_system_operators(cfg: RunConfig):
    ops = build_fock_operators(cfg.n_orbitals)
    if cfg.model_kind == "dqd":
        H = build_dqd_hamiltonian(cfg.dqd, ops)
    else:
        H = build_single_dot_hamiltonian(cfg.single["eps"], cfg.single["U"], ops)
    return H, ops


def omega_grid(cfg: RunConfig):
    g = cfg.grid
    if g.get("kind") == "uniform":
        return np.linspace(g["omega_min"], g["omega_max"], g["n_points"])
    delta = max(b.delta for b in cfg.baths)
    return default_omega_grid(cfg.U, delta, g.get("n_points", 400))


def _describe(cfg: RunConfig):
    lines = [f"model.kind = {cfg.model_kind}"]
    model = cfg.single if cfg.model_kind == "single" else asdict(cfg.dqd)
    lines += [f"model.{k} = {v}" for k, v in model.items()]
    for b in cfg.baths:
        lines.append(f"bath.{b.alpha_label} = delta={b.delta} W={b.W} beta={b.beta} mu={b.mu} "
                     f"orbitals={' '.join(map(str, b.coupled_orbitals))}")
    lines += [f"decomposition.K = {cfg.K}", f"decomposition.tol = {cfg.tol}",
              f"decomposition.method = {cfg.decomposition}", f"hierarchy.L = {cfg.L}"]
    s = cfg.solver
    lines += [f"solver.{k} = {getattr(s, k)}" for k in ("method", "tol", "max_iter", "omega_damp", "restart")]
    lines += [f"observables.spectral = {' '.join(f'{u},{v}' for u, v in cfg.spectral)}",
              f"observables.currents = {cfg.currents}", f"observables.noise = {cfg.noise}",
              f"grid = {cfg.grid}", f"run.workers = {cfg.workers}"]
    return lines


def run(cfg: RunConfig, out_dir=None, workers=None):
    """Execute one configuration and write its artifacts; returns an exit status.

    On failure every file written so far is renamed with a ``.partial`` suffix.
    """
    out_dir = out_dir or cfg.out
    workers = workers or cfg.workers
    os.makedirs(out_dir, exist_ok=True)
    written = []
    manifest = ["# deom run manifest", f"name = {cfg.name}"] + ([f"note = {cfg.note}"] if cfg.note else []) + _describe(cfg)
    t0 = time.perf_counter()

    def emit(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(path)

    status = EXIT_OK
    try:
        modes = build_mode_table(cfg.baths, K=cfg.K, tol=None if cfg.K else cfg.tol, method=cfg.decomposition)
        buf = io.StringIO()
        write_mode_table(modes, buf)
        emit("modes.csv", buf.getvalue())
        J = len(modes)
        manifest += [f"modes.J = {J}", f"modes.K_per_channel = {modes.K_per_channel}",
                     f"ddo_count = {ddo_count(J, cfg.L)}"]
        manifest += ["mode_table:"] + ["  " + ln for ln in buf.getvalue().splitlines()]
        H, ops = build_system_operators(cfg)
        system = solve_system(H, ops, modes, cfg.L, cfg.solver, max_count=cfg.max_ddos)
        info = system.state.info
        manifest += [f"steady.iterations = {info['iterations']}", f"steady.residual = {info['residual']:.6e}",
                     f"steady.trace = {np.trace(system.state.root).real:.12g}"]
        if cfg.currents:
            for b in cfg.baths:
                manifest.append(f"current.{b.alpha_label} = {steady_current(system, b.alpha_label):.12e}")
        omegas = omega_grid(cfg)
        tasks = [("A", (u, v)) for u, v in cfg.spectral]
        if cfg.noise:
            la, lb = cfg.baths[0].alpha_label, cfg.baths[1].alpha_label
            tasks += [("S", (la, la)), ("S", (lb, lb)), ("S", (la, lb))]

        def work(task):
            kind, (x, y) = task
            if kind == "A":
                return impurity_spectral_function(system, x, y, omegas)
            return noise_spectrum(system, x, y, omegas)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
        noise = {}
        for (kind, (x, y)), table in zip(tasks, results):
            if kind == "A":
                emit(f"A_{x}_{y}.csv", table.to_csv())
                w = table.omegas
                manifest.append(f"sum_rule.A_{x}_{y} = {np.trapezoid(np.real(table.values), w):.8f}")
            else:
                emit(f"S_{x}_{y}.csv", table.to_csv())
                noise[(x, y)] = table
        if cfg.noise:
            (ll, rr, lr) = list(noise.values())
            S = total_noise(ll, rr, lr, cfg.noise_a, cfg.noise_b)
            emit("S_total.csv", S.to_csv())
            if cfg.grid.get("kind") == "uniform":
                emit("dSdw_total.csv", spectrum_derivative(S).to_csv())
        manifest.append("status = ok")
    except ConfigError as e:
        status, msg = EXIT_CONFIG, str(e)
    except CapacityError as e:
        status, msg = EXIT_CAPACITY, str(e)
    except ConvergenceError as e:
        status, msg = EXIT_CONVERGENCE, f"{e} (residual {e.residual})"
    except DEOMError as e:
        status, msg = EXIT_OTHER, str(e)
    if status != EXIT_OK:
        manifest.append(f"status = failed ({msg})")
        log.error("run %s failed: %s", cfg.name, msg)
    manifest.append(f"wall_time_s = {time.perf_counter() - t0:.3f}")
    emit("manifest.txt", "\n".join(manifest) + "\n")
    if status != EXIT_OK:
        for path in written:
            os.replace(path, path + ".partial")
    return status


def _load_config(source):
    if source in PRESETS:
        return parse_config(PRESETS[source])
    with open(source, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_run(args):
    base = _load_config(args.config)
    status = EXIT_OK
    for tag, cfg in base.expand():
        if cfg.expensive and not args.allow_expensive:
            log.warning("%s%s is expensive (about %d DDOs); pass --allow-expensive to run it",
                        cfg.name, f"[{tag}]" if tag else "", ddo_estimate(cfg))
            print(f"skipped expensive variant {tag or cfg.name}", file=sys.stderr)
            status = status or EXIT_CAPACITY
            continue
        out = args.out or cfg.out
        if tag:
            out = os.path.join(out, tag)
        st = run(cfg, out, args.workers)
        print(f"{cfg.name} {tag}: exit {st} -> {out}")
        status = status or st
    return status


def _cmd_fit_bath(args):
    cfg = _load_config(args.config)
    modes = build_mode_table(cfg.baths, K=cfg.K, tol=None if cfg.K else cfg.tol, method=cfg.decomposition)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "modes.csv"), "w", encoding="utf-8") as fh:
            write_mode_table(modes, fh)
    else:
        write_mode_table(modes, sys.stdout)
    return EXIT_OK


def _cmd_count(args):
    if args.J < 0 or args.L < 0:
        raise ConfigError("J and L must be non-negative")
    print(ddo_count(args.J, args.L))
    return EXIT_OK


def make_parser():
    p = argparse.ArgumentParser(prog="deom", description="Dissipaton hierarchy solver for quantum-dot impurities.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration file or a named preset")
    r.add_argument("config", help=f"path to a config file, or one of {sorted(PRESETS)}")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--allow-expensive", action="store_true", help="run presets at full scale")
    r.set_defaults(func=_cmd_run)
    f = sub.add_parser("fit-bath", help="decompose the baths and print the mode table CSV")
    f.add_argument("config")
    f.add_argument("--workers", type=int, default=None)
    f.add_argument("--out", default=None)
    f.set_defaults(func=_cmd_fit_bath)
    c = sub.add_parser("count", help="number of DDOs for J modes truncated at tier L (root included)")
    c.add_argument("--J", type=int, required=True)
    c.add_argument("--L", type=int, required=True)
    c.set_defaults(func=_cmd_count)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DEOMError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
