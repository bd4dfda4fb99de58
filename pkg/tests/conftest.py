import numpy as np
import pytest

from fitdg import mesh as meshmod
from fitdg.coefficients import DeltaPolicy, Problem
from fitdg.exp_fitting import build_fitting
from fitdg.fem_core import DgField
from fitdg.mesh import MarkFlags, create_uniform, execute_adaptation
from fitdg.scenarios import case_problem

DOMAIN = (0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(mesh, k, rng, scale=1.0):
    u = DgField(mesh, k)
    u.coeffs[:] = scale * rng.standard_normal(u.coeffs.shape)
    return u


def hanging_mesh(levels=1, refine=(0,)):
    """Uniform mesh with a few cells refined once (one hanging layer)."""
    mesh = create_uniform(DOMAIN, levels)
    flags = MarkFlags(np.zeros(mesh.n_cells, dtype=bool))
    for c in refine:
        flags.refine[c] = True
    new_mesh, _ = execute_adaptation(mesh, flags)
    return new_mesh


def refine_pair(mesh, refine, rng=None):
    """(coarse, fine) pair where fine refines coarse; fine is the union."""
    flags = MarkFlags(np.zeros(mesh.n_cells, dtype=bool))
    flags.refine[list(refine)] = True
    fine, _ = execute_adaptation(mesh, flags)
    return mesh, fine


def small_problems():
    """Coefficient sets used for the randomized oracle tests."""
    probs = []
    for name, eps in (("case1", 1e-2), ("case2", 1e-2), ("case3", 0.1),
                      ("case4", 0.1), ("case2", 1e-6), ("case3", 1e-6)):
        probs.append(case_problem(name, eps=eps))
    probs.append(case_problem("case1", eps=1e-2, delta=DeltaPolicy("fixed", 0.1)))
    # pure transport
    probs.append(case_problem("case1", eps=0.0))
    return probs


def fit_for(prob, mesh, k=2):
    return build_fitting(mesh, k, prob)
