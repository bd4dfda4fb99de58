"""Marking strategies: exact counts, tie-breaking, flag interplay, bounds."""

import math

import numpy as np
import pytest

from fitdg.adaptivity import MarkingPolicy, adapt_step, mark
from fitdg.mesh import create_uniform

from conftest import DOMAIN


def test_cells_strategy_exact_counts(rng):
    for levels in (1, 2, 3):
        mesh = create_uniform(DOMAIN, levels)
        n = mesh.n_cells
        ind = rng.random(n)
        pol = MarkingPolicy(strategy="cells", refine_fraction=0.10,
                            coarsen_fraction=0.05)
        flags = mark(ind, mesh, pol)
        assert flags.refine.sum() == math.ceil(0.10 * n)
        assert flags.coarsen.sum() == math.ceil(0.05 * n)


def test_cells_strategy_picks_extremes(rng):
    mesh = create_uniform(DOMAIN, 2)
    ind = rng.permutation(mesh.n_cells).astype(float)
    pol = MarkingPolicy(refine_fraction=0.25, coarsen_fraction=0.25)
    flags = mark(ind, mesh, pol)
    n_ref = math.ceil(0.25 * mesh.n_cells)
    assert set(np.nonzero(flags.refine)[0]) == set(np.argsort(-ind)[:n_ref])
    assert set(np.nonzero(flags.coarsen)[0]) == set(np.argsort(ind)[:n_ref])


def test_tie_break_lower_index():
    mesh = create_uniform(DOMAIN, 2)
    ind = np.ones(mesh.n_cells)
    pol = MarkingPolicy(refine_fraction=0.10, coarsen_fraction=0.0)
    flags = mark(ind, mesh, pol)
    n_ref = math.ceil(0.10 * mesh.n_cells)
    # all indicators equal: the lowest cell indices win
    assert np.array_equal(np.nonzero(flags.refine)[0], np.arange(n_ref))


def test_refine_wins_over_coarsen():
    mesh = create_uniform(DOMAIN, 1)
    ind = np.ones(mesh.n_cells)
    pol = MarkingPolicy(refine_fraction=1.0, coarsen_fraction=1.0,
                        min_level=0)
    flags = mark(ind, mesh, pol)
    assert flags.refine.all()
    assert not flags.coarsen.any()


def test_error_strategy_minimal_prefix():
    mesh = create_uniform(DOMAIN, 2)
    ind = np.zeros(mesh.n_cells)
    ind[: mesh.n_cells] = np.linspace(1.0, 2.0, mesh.n_cells)
    pol = MarkingPolicy(strategy="error", refine_fraction=0.3,
                        coarsen_fraction=0.1)
    flags = mark(ind, mesh, pol)
    e = ind ** 2
    total = e.sum()
    # marked mass reaches the target, and dropping the smallest marked
    # cell would fall below it
    ref = np.nonzero(flags.refine)[0]
    mass = e[ref].sum()
    assert mass >= 0.3 * total - 1e-12
    assert mass - e[ref].min() < 0.3 * total
    coa = np.nonzero(flags.coarsen)[0]
    mass = e[coa].sum()
    assert mass >= 0.1 * total - 1e-12
    assert mass - e[coa].max() < 0.1 * total


def test_level_bounds(rng):
    mesh = create_uniform(DOMAIN, 2)
    ind = rng.random(mesh.n_cells)
    pol = MarkingPolicy(refine_fraction=1.0, coarsen_fraction=0.0,
                        max_level=2)
    flags = mark(ind, mesh, pol)
    assert not flags.refine.any()     # everything already at max_level
    pol = MarkingPolicy(refine_fraction=0.0, coarsen_fraction=1.0,
                        min_level=2)
    flags = mark(ind, mesh, pol)
    assert not flags.coarsen.any()


def test_adapt_step_executes(rng):
    mesh = create_uniform(DOMAIN, 2)
    ind = rng.random(mesh.n_cells)
    pol = MarkingPolicy(refine_fraction=0.10, coarsen_fraction=0.05)
    new_mesh, tmap, flags = adapt_step(mesh, ind, pol)
    new_mesh.check_tiling()
    new_mesh.check_balanced()
    assert len(tmap.entries) == new_mesh.n_cells
    # every refined cell produced four children
    n_ref = flags.refine.sum()
    assert new_mesh.n_cells >= mesh.n_cells + 3 * n_ref - 3 * flags.coarsen.sum()


def test_unknown_strategy_rejected():
    with pytest.raises(ValueError):
        MarkingPolicy(strategy="bogus")
