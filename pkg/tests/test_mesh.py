import numpy as np

from fitdg.fem_core import DgField, transfer
from fitdg.mesh import (MarkFlags, advance_auxiliary, common_refinement,
                        create_uniform, execute_adaptation, refines)

from conftest import DOMAIN, random_field


def _check_invariants(mesh):
    mesh.check_tiling()
    mesh.check_balanced()
    assert abs(mesh.areas.sum() - 1.0) < 1e-12
    # faces tile the skeleton: every interior face has distinct cells and
    # subface spans within both cells' extents
    for f in mesh.faces:
        assert f.h > 0
        if f.interior:
            assert f.minus != f.plus
        else:
            assert f.bc in ("dirichlet", "neumann")


def test_uniform_mesh_basics():
    mesh = create_uniform(DOMAIN, 3)
    assert mesh.n_cells == 64
    _check_invariants(mesh)
    assert np.all(mesh.level == 3)


def test_random_adapt_cycles():
    rng = np.random.default_rng(7)
    mesh = create_uniform(DOMAIN, 2)
    for cycle in range(100):
        n = mesh.n_cells
        flags = MarkFlags(rng.random(n) < 0.25, rng.random(n) < 0.25)
        aux = advance_auxiliary(mesh, flags)
        new_mesh, tmap = execute_adaptation(mesh, flags)
        _check_invariants(new_mesh)
        _check_invariants(aux)
        # the auxiliary mesh refines both generations
        assert refines(aux, mesh)
        assert refines(aux, new_mesh)
        # the transfer map covers every target cell exactly once
        assert len(tmap.entries) == new_mesh.n_cells
        # keep sizes bounded so 100 cycles stay cheap
        if new_mesh.n_cells > 1200:
            coarse_all = MarkFlags(np.zeros(new_mesh.n_cells, dtype=bool),
                                   np.ones(new_mesh.n_cells, dtype=bool))
            new_mesh, _ = execute_adaptation(new_mesh, coarse_all)
        mesh = new_mesh


def test_prolongation_round_trip():
    rng = np.random.default_rng(3)
    mesh = create_uniform(DOMAIN, 2)
    for _ in range(10):
        flags = MarkFlags(rng.random(mesh.n_cells) < 0.3)
        fine, _ = execute_adaptation(mesh, flags)
        u = random_field(mesh, 2, rng)
        back = transfer(transfer(u, fine), mesh)
        assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-12


def test_common_refinement():
    rng = np.random.default_rng(11)
    base = create_uniform(DOMAIN, 2)
    for _ in range(20):
        a, _ = execute_adaptation(base, MarkFlags(rng.random(base.n_cells) < 0.3,
                                                  rng.random(base.n_cells) < 0.3))
        b, _ = execute_adaptation(base, MarkFlags(rng.random(base.n_cells) < 0.3,
                                                  rng.random(base.n_cells) < 0.3))
        u = common_refinement(a, b)
        assert refines(u, a) and refines(u, b)
        _check_invariants(u)


def test_balance_enforced():
    mesh = create_uniform(DOMAIN, 1)
    # refine one cell twice; the neighbors must cascade
    for _ in range(3):
        flags = MarkFlags(np.zeros(mesh.n_cells, dtype=bool))
        flags.refine[0] = True
        mesh, _ = execute_adaptation(mesh, flags)
        mesh.check_balanced()


def test_locate():
    mesh = create_uniform(DOMAIN, 3)
    rng = np.random.default_rng(5)
    x = rng.random(200)
    y = rng.random(200)
    c = mesh.locate(x, y)
    assert np.all(x >= mesh.x0[c] - 1e-12)
    assert np.all(x <= mesh.x0[c] + mesh.hx[c] + 1e-12)
    assert np.all(y >= mesh.y0[c] - 1e-12)
    assert np.all(y <= mesh.y0[c] + mesh.hy[c] + 1e-12)
