"""Alternating temperature/Stokes coupling with adaptive meshing.

One advance: the temperature is stepped implicitly with the *previous*
velocity frozen in the convection term, then Stokes is re-solved with the
new temperature in the buoyancy; the fitting data and estimator terms are
rebuilt from the new discrete velocity, and the mesh is adapted on the
configured cadence.  The new temperature stays on its own mesh until the
next step projects it (so the estimator sees the genuine previous state).

The buoyancy force is (0, gravity * rho(u)); with a constant rho the
force is balanced exactly by a hydrostatic pressure and the velocity
vanishes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import mesh as meshmod
from . import estimator as estmod
from .adaptivity import MarkingPolicy, mark
from .coefficients import DeltaPolicy, DiscreteConvection, Problem
from .exp_fitting import _FieldEval, build_fitting
from .fem_core import cell_quad_points, cell_quad_weights, l2_project
from .ipdg import ImplicitEuler, dof_count
from .stokes import StokesSolver


@dataclass
class CoupledConfig:
    k: int = 2
    eps: float = 0.0
    mu: float = 100.0
    rho_scale: float = 1.0e6
    gravity: float = 9.81
    sigma: float = None
    alpha: float = 1.0
    delta: DeltaPolicy = field(default_factory=DeltaPolicy)
    cfl: float = 0.5
    marking: MarkingPolicy = None          # None disables adaptivity
    adapt_stride: int = 1
    stokes_bc: str = "free_slip"


@dataclass
class CoupledState:
    t: float
    mesh: object                 # mesh of the upcoming temperature solve
    u: object                    # latest temperature, on its own mesh
    vx: object
    vy: object
    p: object
    conv: object                 # DiscreteConvection wrapping (vx, vy)
    prob: object                 # estimator problem at the latest time
    fitting: object
    A: object                    # residual operand of the latest step
    aux: object                  # union of u.mesh and mesh
    report: object
    config: object
    step: int = 0
    mass_log: list = field(default_factory=list)
    last_flags: object = None


def _body_force(cfg, u):
    ev = _FieldEval(u)

    def force(x, y):
        rho = cfg.rho_scale * ev.value(x, y)
        return np.zeros(np.shape(x)), cfg.gravity * rho
    return force


def _solve_stokes(cfg, mesh, u):
    solver = StokesSolver(mesh, mu=cfg.mu, bc=cfg.stokes_bc)
    vx, vy, p = solver.solve(_body_force(cfg, u))
    return vx, vy, p, DiscreteConvection(vx, vy)


def _problem(cfg, conv, g_d):
    return Problem(eps=cfg.eps, conv=conv, g_d=g_d, sigma=cfg.sigma,
                   alpha=cfg.alpha, delta=cfg.delta)


def temperature_mass(u):
    wq = cell_quad_weights(u.mesh, u.k)
    return float(np.sum(wq * u.values()))


def upwind_flux_bound(u, prob, nq=None):
    """Term-by-term quadrature bound for the rate of change of int(u).

    Testing the transport step with v == 1 leaves the boundary upwind
    terms, the interior upwind jumps and the (non-conservative) volume
    convection integral; the triangle inequality over those pieces bounds
    |d/dt int(u)| whenever f = 0.
    """
    from .fem_core import cell_quad_points, cell_quad_weights, face_ops
    mesh, k = u.mesh, u.k
    wq = cell_quad_weights(mesh, k, nq)
    pts = cell_quad_points(mesh, k, nq)
    bx, by = prob.conv.eval(pts[:, :, 0], pts[:, :, 1])
    gr = u.gradients(nq)
    total = float(np.abs(np.sum(wq * (bx * gr[:, :, 0] + by * gr[:, :, 1]), axis=1)).sum())

    groups, w1 = face_ops(mesh, k, nq)
    for g in groups:
        xf, yf = g.pts[:, :, 0], g.pts[:, :, 1]
        bxf, byf = prob.conv.eval(xf, yf)
        wf = w1[None, :] * g.h[:, None]
        if g.plus is not None:
            bn = bxf if g.axis == 0 else byf
            jump = u.coeffs[g.minus] @ g.Tm.T - u.coeffs[g.plus] @ g.Tp.T
            total += float(np.sum(wf * np.abs(bn) * np.abs(jump)))
        else:
            bn = (bxf if g.axis == 0 else byf) * g.sign
            tr = np.abs(u.coeffs[g.minus] @ g.Tm.T)
            gd = np.abs(np.broadcast_to(np.asarray(prob.g_d(xf, yf), dtype=float),
                                        xf.shape))
            total += float(np.sum(wf * (np.maximum(bn, 0.0) * tr
                                        + np.maximum(-bn, 0.0) * gd)))
    return total


def cfl_dt(conv, mesh, cfl):
    """cfl * min_K h_K / sup_K |v| over the cells of the velocity mesh."""
    vmesh = conv.vx.mesh
    speed = np.hypot(conv.vx.values(), conv.vy.values()).max(axis=1)
    h = np.minimum(vmesh.hx, vmesh.hy)
    with np.errstate(divide="ignore"):
        ratios = np.where(speed > 0, h / np.where(speed > 0, speed, 1.0), np.inf)
    return cfl * float(ratios.min())


def initialize(mesh, u0_fn, cfg, g_d=None):
    """Project the initial temperature, solve the initial Stokes problem
    and seed the estimator report."""
    u0 = l2_project(u0_fn, mesh, cfg.k)
    vx, vy, p, conv = _solve_stokes(cfg, mesh, u0)
    if g_d is None:
        g_d = u0_fn                  # boundary data frozen to the initial trace
    prob = _problem(cfg, conv, g_d)
    fitting = build_fitting(mesh, cfg.k, prob)
    A0 = estmod.initial_operand(u0, prob, fitting)
    report = estmod.EstimatorReport()
    report.start(estmod.zeta_S1(u0, A0, prob, fitting),
                 estmod.zeta_S3(u0, prob, fitting))
    return CoupledState(t=0.0, mesh=mesh, u=u0, vx=vx, vy=vy, p=p,
                        conv=conv, prob=prob, fitting=fitting, A=A0,
                        aux=mesh, report=report, config=cfg)


def advance(state, dt):
    """One coupled step of at most dt (CFL-capped); returns the new state."""
    cfg = state.config
    if cfg.cfl is not None:
        dt = min(dt, cfl_dt(state.conv, state.mesh, cfg.cfl))
    mesh, k = state.mesh, cfg.k

    # temperature step with the frozen previous velocity
    prob_frozen = _problem(cfg, state.conv, state.prob.g_d)
    stepper = ImplicitEuler(mesh, k, prob_frozen, dt)
    u_n = stepper.step(state.u)

    # Stokes re-solve with the new temperature, fitting from the new velocity
    vx, vy, p, conv_n = _solve_stokes(cfg, mesh, u_n)
    prob_n = _problem(cfg, conv_n, state.prob.g_d)
    fitting_n = build_fitting(mesh, k, prob_n)

    terms = estmod.timestep_terms(u_n, state.u, dt, prob_n, fitting_n,
                                  prob_prev=state.prob, fit_prev=state.fitting,
                                  aux=state.aux, A_prev=state.A)
    density = fitting_n.gronwall_density()
    state.report.update(state.t + dt, dt, mesh.n_cells, dof_count(mesh, k),
                        terms, density)

    mass_change = abs(temperature_mass(u_n) - temperature_mass(state.u))
    flux_bound = dt * upwind_flux_bound(u_n, prob_frozen)
    mass_log = state.mass_log + [(mass_change, flux_bound)]

    step = state.step + 1
    flags = None
    if cfg.marking is not None and step % cfg.adapt_stride == 0:
        ind = estmod.local_indicator(u_n, state.u, dt, prob_n, fitting_n)
        flags = mark(ind, mesh, cfg.marking)
        new_mesh, _ = meshmod.execute_adaptation(mesh, flags)
        aux = meshmod.advance_auxiliary(mesh, flags)
    else:
        new_mesh, aux = mesh, mesh

    if new_mesh is not mesh:
        vx, vy, p, conv_n = _solve_stokes(cfg, new_mesh, u_n)

    return CoupledState(t=state.t + dt, mesh=new_mesh, u=u_n,
                        vx=vx, vy=vy, p=p, conv=conv_n, prob=prob_n,
                        fitting=fitting_n, A=terms["A"], aux=aux,
                        report=state.report, config=cfg, step=step,
                        mass_log=mass_log, last_flags=flags)
