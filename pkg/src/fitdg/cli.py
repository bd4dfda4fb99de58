"""Command-line driver: configured runs of the benchmark scenarios with
CSV estimator logs and VTK snapshots.

Usage: fitdg run <config-file> [--output-dir D] [--levels N] [--dt X]
                               [--until T] [--scenario NAME]

Config files are flat "key = value" text; '#' starts a comment.  Unknown
keys are hard errors (exit 2).  Solver failures exit 3 and keep whatever
logs were written.  Reruns of the same configuration produce byte-identical
CSV output.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import mesh as meshmod
from . import boussinesq as bq
from . import estimator as estmod
from .adaptivity import MarkingPolicy, adapt_step
from .coefficients import DeltaPolicy
from .exp_fitting import build_fitting
from .fem_core import l2_project, transfer
from .ipdg import ImplicitEuler, dof_count
from . import scenarios


class ConfigError(Exception):
    pass


# key -> (parser, default); the key set is closed.
def _parse_delta(text):
    return None if text == "none" else DeltaPolicy.parse(text)


def _parse_marking(text):
    if text not in ("none", "cells", "error"):
        raise ValueError(f"marking must be none|cells|error, got {text!r}")
    return text


def _parse_domain(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("domain needs 4 comma-separated numbers")
    return tuple(parts)


def _opt_float(text):
    return None if text == "none" else float(text)


KEYS = {
    "scenario": (str, "case1"),
    "domain": (_parse_domain, None),      # default: scenario's own domain
    "levels": (int, 5),
    "degree": (int, 2),
    "eps": (float, 1e-6),
    "alpha": (float, 1.0),
    "delta": (_parse_delta, None),        # default: scenario policy
    "sigma": (_opt_float, None),
    "dt": (float, 0.01),
    "T": (float, 2.5),
    "marking": (_parse_marking, "none"),
    "refine_fraction": (float, 0.10),
    "coarsen_fraction": (float, 0.05),
    "min_level": (int, 0),
    "max_level": (int, 8),
    "marking_squared": (lambda s: s == "true", True),
    "adapt_stride": (int, 1),
    "output_dir": (str, "out"),
    "output_every": (int, 0),             # VTK cadence in steps; 0 = never
    "potential_sign": (float, 1.0),
    "cfl": (_opt_float, 0.5),
    "mu": (float, scenarios.VK_VISCOSITY),
    "rho_scale": (float, scenarios.VK_RHO_SCALE),
    "gravity": (float, scenarios.VK_GRAVITY),
    "seed": (int, 0),
    "wind": (str, "case1"),               # convection of the custom scenario
}

_SCENARIOS = ("case1", "case2", "case3", "case4", "van_keken",
              "manufactured", "custom")


def parse_config(text):
    """Parse flat key-value text into a config dict (defaults filled)."""
    cfg = {k: d for k, (_, d) in KEYS.items()}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        try:
            cfg[key] = KEYS[key][0](val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {ln}: bad value for {key}: {exc}")
    if cfg["scenario"] not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    if cfg["T"] <= 0 or cfg["dt"] <= 0:
        raise ConfigError("T and dt must be positive")
    return cfg


def serialize_config(cfg):
    """Inverse of parse_config (parse(serialize(c)) == c)."""
    out = []
    for key in KEYS:
        v = cfg[key]
        if v is None:
            if key == "domain":
                continue
            text = "none"
        elif isinstance(v, DeltaPolicy):
            text = v.kind if v.kind != "fixed" else repr(v.value)
        elif isinstance(v, tuple):
            text = ",".join(repr(float(p)) for p in v)
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"


def _marking_policy(cfg):
    if cfg["marking"] == "none":
        return None
    return MarkingPolicy(strategy=cfg["marking"],
                         refine_fraction=cfg["refine_fraction"],
                         coarsen_fraction=cfg["coarsen_fraction"],
                         min_level=cfg["min_level"],
                         max_level=cfg["max_level"],
                         squared=cfg["marking_squared"])


def _snapshot(outdir, step, mesh, fields):
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    corner_data = {}
    cell_data = {"level": mesh.level.astype(float)}
    for name, val in fields.items():
        if hasattr(val, "eval_cellwise"):
            corner_data[name] = val.eval_cellwise(corners)
        else:
            cell_data[name] = np.asarray(val, dtype=float)
    meshmod.write_vtu(os.path.join(outdir, f"snap_{step:06d}.vtu"),
                      mesh, cell_data=cell_data, corner_data=corner_data)


def _run_prescribed(cfg, outdir):
    """Cases 1-4, the manufactured layer problem and the custom wind."""
    name = cfg["scenario"]
    k = cfg["degree"]
    domain = cfg["domain"] or scenarios.CASE_DOMAIN
    if name == "manufactured":
        prob, u_exact, _ = scenarios.manufactured_problem(eps=cfg["eps"],
                                                          delta=cfg["delta"])
        prob.sigma, prob.alpha = cfg["sigma"], cfg["alpha"]
        u0_fn = u_exact
    else:
        wind = name if name != "custom" else cfg["wind"]
        prob = scenarios.case_problem(wind, eps=cfg["eps"], alpha=cfg["alpha"],
                                      delta=cfg["delta"], sigma=cfg["sigma"])
        u0_fn = scenarios.initial_datum
    prob.potential_sign = cfg["potential_sign"]

    mesh = meshmod.create_uniform(domain, cfg["levels"])
    policy = _marking_policy(cfg)
    u = l2_project(u0_fn, mesh, k)
    fit = build_fitting(mesh, k, prob)
    A = estmod.initial_operand(u, prob, fit)
    report = estmod.EstimatorReport()
    report.start(estmod.zeta_S1(u, A, prob, fit),
                 estmod.zeta_S3(u, prob, fit))

    dt, T = cfg["dt"], cfg["T"]
    n_steps = int(round(T / dt))
    stepper = ImplicitEuler(mesh, k, prob, dt)
    t = 0.0
    aux = mesh
    try:
        for step in range(1, n_steps + 1):
            u_prev = u
            u = stepper.step(u_prev)
            fit_n = build_fitting(mesh, k, prob) if mesh is not fit.mesh else fit
            fit = fit_n
            terms = estmod.timestep_terms(u, u_prev, dt, prob, fit,
                                          aux=aux, A_prev=A)
            A = terms["A"]
            t += dt
            report.update(t, dt, mesh.n_cells, dof_count(mesh, k),
                          terms, fit.gronwall_density())
            if cfg["output_every"] and step % cfg["output_every"] == 0:
                ind = estmod.local_indicator(u, u_prev, dt, prob, fit)
                _snapshot(outdir, step, mesh, {"u": u, "indicator": ind})
            if policy is not None and step % cfg["adapt_stride"] == 0:
                ind = estmod.local_indicator(u, u_prev, dt, prob, fit)
                new_mesh, _, flags = adapt_step(mesh, ind, policy)
                aux = meshmod.advance_auxiliary(mesh, flags)
                if new_mesh is not mesh:
                    mesh = new_mesh
                    stepper = ImplicitEuler(mesh, k, prob, dt)
            else:
                aux = mesh
    finally:
        report.write_csv(os.path.join(outdir, "estimator.csv"))
    return 0


def _run_van_keken(cfg, outdir):
    domain = cfg["domain"] or scenarios.VK_DOMAIN
    ccfg = bq.CoupledConfig(k=cfg["degree"], eps=cfg["eps"], mu=cfg["mu"],
                            rho_scale=cfg["rho_scale"], gravity=cfg["gravity"],
                            sigma=cfg["sigma"], alpha=cfg["alpha"],
                            delta=cfg["delta"] or DeltaPolicy("zero"),
                            cfl=cfg["cfl"], marking=_marking_policy(cfg),
                            adapt_stride=cfg["adapt_stride"])
    mesh = meshmod.create_uniform(domain, cfg["levels"])
    state = bq.initialize(mesh, scenarios.vk_initial, ccfg)
    dt, T = cfg["dt"], cfg["T"]
    try:
        while state.t < T - 1e-12:
            state = bq.advance(state, min(dt, T - state.t))
            if cfg["output_every"] and state.step % cfg["output_every"] == 0:
                ind = estmod.local_indicator(state.u, state.u, dt,
                                             state.prob, state.fitting)
                pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
                m = state.u.mesh
                x = m.x0[:, None] + pts[None, :, 0] * m.hx[:, None]
                y = m.y0[:, None] + pts[None, :, 1] * m.hy[:, None]
                fields = {"u": state.u, "indicator": ind,
                          "omega": state.fitting.omega(x, y)}
                if state.vx.mesh is m:
                    fields["vx"], fields["vy"], fields["p"] = \
                        state.vx, state.vy, state.p
                _snapshot(outdir, state.step, m, fields)
    finally:
        state.report.write_csv(os.path.join(outdir, "estimator.csv"))
    return 0


def run_scenario(cfg):
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.echo"), "w") as fh:
        fh.write(serialize_config(cfg))
    if cfg["scenario"] == "van_keken":
        return _run_van_keken(cfg, outdir)
    return _run_prescribed(cfg, outdir)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fitdg")
    sub = ap.add_subparsers(dest="cmd", required=True)
    runp = sub.add_parser("run", help="run a configured scenario")
    runp.add_argument("config")
    runp.add_argument("--output-dir")
    runp.add_argument("--levels", type=int)
    runp.add_argument("--dt", type=float)
    runp.add_argument("--until", type=float)
    runp.add_argument("--scenario")
    args = ap.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.output_dir is not None:
            cfg["output_dir"] = args.output_dir
        if args.levels is not None:
            cfg["levels"] = args.levels
        if args.dt is not None:
            cfg["dt"] = args.dt
        if args.until is not None:
            cfg["T"] = args.until
        if args.scenario is not None:
            cfg["scenario"] = args.scenario
            if cfg["scenario"] not in _SCENARIOS:
                raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    except (ConfigError, OSError) as exc:
        print(f"fitdg: config error: {exc}", file=sys.stderr)
        return 2
    try:
        return run_scenario(cfg)
    except Exception as exc:   # solver failure: keep partial logs
        print(f"fitdg: solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
