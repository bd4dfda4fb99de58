"""Built-in scenario definitions for the four convection benchmarks, the
manufactured-solution runs and the isothermal-interface transport benchmark.

All four benchmark cases share the unit square, eps = 1e-6 by default,
f = 0 and initial datum u0(x, y) = y - 0.15 sin(4 pi x) sin(2 pi y), with
time-constant Dirichlet data given by the trace of u0.
"""

import numpy as np

from .coefficients import Convection, DeltaPolicy, Problem


def initial_datum(x, y):
    return y - 0.15 * np.sin(4 * np.pi * x) * np.sin(2 * np.pi * y)


def _zero(x, y):
    return np.zeros(np.shape(x))


def case_convection(name):
    """Convection field with its analytic potential split, per case."""
    if name == "case1":
        return Convection(lambda x, y: (y, -x),
                          div_b=_zero,
                          eta=_zero,
                          grad_eta=lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x))),
                          lap_eta=_zero)
    if name == "case2":
        return Convection(
            lambda x, y: (np.exp(x) * np.sin(y) + y, np.exp(x) * np.cos(y) - x),
            div_b=_zero,
            eta=lambda x, y: np.exp(x) * np.sin(y),
            grad_eta=lambda x, y: (np.exp(x) * np.sin(y), np.exp(x) * np.cos(y)),
            lap_eta=_zero)
    if name == "case3":
        return Convection(lambda x, y: (x, y),
                          div_b=lambda x, y: np.full(np.shape(x), 2.0),
                          eta=lambda x, y: 0.5 * (x ** 2 + y ** 2),
                          grad_eta=lambda x, y: (x, y),
                          lap_eta=lambda x, y: np.full(np.shape(x), 2.0))
    if name == "case4":
        return Convection(lambda x, y: (x, x ** 2 + y ** 2),
                          div_b=lambda x, y: 1.0 + 2.0 * y,
                          eta=lambda x, y: 0.5 * x ** 2 + x ** 2 * y,
                          grad_eta=lambda x, y: (x + 2.0 * x * y, x ** 2),
                          lap_eta=lambda x, y: 1.0 + 2.0 * y)
    raise ValueError("unknown case %r" % (name,))


_CASE_DELTA = {"case1": DeltaPolicy("zero"), "case2": DeltaPolicy("zero"),
               "case3": DeltaPolicy("auto"), "case4": DeltaPolicy("auto")}


def case_problem(name, eps=1e-6, alpha=1.0, delta=None, sigma=None):
    """Problem data for case1..case4 (delta override, e.g. fixed 0.1)."""
    conv = case_convection(name)
    pol = delta if delta is not None else _CASE_DELTA[name]
    return Problem(eps=eps, conv=conv, f=_zero, g_d=initial_datum,
                   sigma=sigma, alpha=alpha, delta=pol)


CASE_DOMAIN = (0.0, 0.0, 1.0, 1.0)


# -- manufactured stationary problem (interior-layer solution) ------------

def manufactured_solution(width=30.0):
    """u = tanh(width (x + y - 1)), with closed-form derivatives."""
    def u(x, y):
        return np.tanh(width * (x + y - 1.0))

    def grad(x, y):
        s = width / np.cosh(width * (x + y - 1.0)) ** 2
        return s, s

    def lap(x, y):
        t = np.tanh(width * (x + y - 1.0))
        return -2.0 * 2.0 * width ** 2 * t * (1.0 - t ** 2)
    return u, grad, lap


def manufactured_problem(eps=1e-2, width=30.0, delta=None):
    """Convection-diffusion with the tanh interior layer and case-1 wind."""
    u, grad, lap = manufactured_solution(width)
    conv = case_convection("case1")

    def f(x, y):
        ux, uy = grad(x, y)
        return -eps * lap(x, y) + y * ux - x * uy
    pol = delta if delta is not None else DeltaPolicy("zero")
    return Problem(eps=eps, conv=conv, f=f, g_d=u, delta=pol), u, grad


# -- isothermal interface transport benchmark -----------------------------

VK_DOMAIN = (0.0, 0.0, 0.9142, 1.0)
VK_VISCOSITY = 100.0
VK_RHO_SCALE = 1.0e6
VK_GRAVITY = 9.81


def vk_initial(x, y):
    """Two-layer composition: 1 below the perturbed interface, else 0."""
    iface = 0.2 * (1.0 + 0.1 * np.cos(np.pi * x / 0.9142))
    return np.where(y < iface, 1.0, 0.0)


def vk_problem(conv):
    """Pure-transport composition problem driven by a discrete velocity."""
    return Problem(eps=0.0, conv=conv, f=_zero, g_d=_zero,
                   delta=DeltaPolicy("zero"))
