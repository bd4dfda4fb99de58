import math

import numpy as np
import pytest

from fitdg import estimator as est
from fitdg.coefficients import DeltaPolicy
from fitdg.exp_fitting import build_fitting
from fitdg.fem_core import DgField, interpolate, l2_project, transfer
from fitdg.ipdg import solve_stationary
from fitdg.mesh import create_uniform
from fitdg.scenarios import case_problem, manufactured_problem

from conftest import DOMAIN, hanging_mesh, random_field, refine_pair, small_problems

import oracles


def _rel(a, b, floor=1e-14):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _meshes():
    return [create_uniform(DOMAIN, 1), create_uniform(DOMAIN, 2),
            hanging_mesh(1, (0,)), hanging_mesh(1, (1, 2))]


def test_stationary_oracle_equivalence(rng):
    probs = small_problems()
    count = 0
    for i in range(24):
        prob = probs[i % len(probs)]
        mesh = _meshes()[i % 4]
        k = 2
        fit = build_fitting(mesh, k, prob)
        u = random_field(mesh, k, rng)
        per_cell, total = est.stationary_estimate(u, prob, fit)
        o_cells, o_total = oracles.oracle_stationary(u, prob, fit)
        assert _rel(total, o_total) < 1e-10
        assert np.max(np.abs(per_cell - o_cells)) < 1e-10 * max(1.0, o_total)
        count += 1
    assert count >= 20


def test_kelly_oracle_equivalence(rng):
    for i in range(6):
        mesh = _meshes()[i % 4]
        u = random_field(mesh, 2, rng)
        eps = [1e-2, 0.5, 1e-6][i % 3]
        got = est.kelly_indicator(u, eps)
        want = oracles.oracle_kelly(u, eps)
        assert np.max(np.abs(got - want)) < 1e-12 * max(1.0, want.max())


def test_operand_identity(rng):
    """A^n = Pi(f + delta u) - (u - Pi u_prev)/dt, against naive projections."""
    prob = case_problem("case3", eps=0.1)
    coarse, fine = refine_pair(create_uniform(DOMAIN, 1), (0, 2))
    k, dt = 2, 0.05
    fit = build_fitting(fine, k, prob)
    u_prev = random_field(coarse, k, rng)
    u_n = random_field(fine, k, rng)
    A = est.residual_operand(u_n, u_prev, dt, prob, fit, aux=fine)
    A_o = oracles.oracle_operand(u_n, u_prev, dt, prob, fit)
    scale = max(1.0, np.max(np.abs(A_o.coeffs)))
    assert np.max(np.abs(A.coeffs - A_o.coeffs)) < 1e-10 * scale


def test_timestep_terms_oracle_same_mesh(rng):
    probs = small_problems()
    n_checked = 0
    for i in range(12):
        prob = probs[i % len(probs)]
        mesh = _meshes()[i % 4]
        k, dt = 2, 0.02 * (1 + i % 3)
        fit = build_fitting(mesh, k, prob)
        u_prev = random_field(mesh, k, rng)
        u_n = random_field(mesh, k, rng)
        A_prev = est.initial_operand(u_prev, prob, fit)
        terms = est.timestep_terms(u_n, u_prev, dt, prob, fit,
                                   aux=mesh, A_prev=A_prev)
        o = oracles.oracle_zeta_terms(u_n, u_prev, dt, prob, fit, mesh, A_prev)
        scale = max(1.0, *(o[key] for key in ("S1", "S2", "S3", "S4", "T1", "T2")))
        for key in ("S1", "S2", "S3", "S4", "T1", "T2"):
            assert abs(terms[key] - o[key]) < 1e-10 * scale, \
                (key, terms[key], o[key])
        n_checked += 1
    assert n_checked >= 10


def test_timestep_terms_oracle_refined_pair(rng):
    probs = small_problems()
    n_checked = 0
    for i in range(10):
        prob = probs[i % len(probs)]
        coarse = create_uniform(DOMAIN, 1)
        _, fine = refine_pair(coarse, [(0,), (1, 3), (0, 2)][i % 3])
        k, dt = 2, 0.05
        fit = build_fitting(fine, k, prob)
        fit_prev = build_fitting(coarse, k, prob)
        u_prev = random_field(coarse, k, rng)
        u_n = random_field(fine, k, rng)
        A_prev = est.initial_operand(u_prev, prob, fit_prev)
        # fine refines coarse, so fine is itself the union mesh
        terms = est.timestep_terms(u_n, u_prev, dt, prob, fit,
                                   aux=fine, A_prev=A_prev)
        o = oracles.oracle_zeta_terms(u_n, u_prev, dt, prob, fit, fine, A_prev)
        scale = max(1.0, *(o[key] for key in ("S1", "S2", "S3", "S4", "T1", "T2")))
        for key in ("S1", "S2", "S3", "S4", "T1", "T2"):
            assert abs(terms[key] - o[key]) < 1e-10 * scale, \
                (key, terms[key], o[key])
        n_checked += 1
    assert n_checked >= 8


def test_local_indicator_oracle(rng):
    """Marking indicator: nodal-interpolant operand + 'indicator' variant."""
    for i, prob in enumerate(small_problems()[:4]):
        mesh = _meshes()[i % 4]
        k, dt = 2, 0.05
        fit = build_fitting(mesh, k, prob)
        u_prev = random_field(mesh, k, rng)
        u_n = random_field(mesh, k, rng)
        got = est.local_indicator(u_n, u_prev, dt, prob, fit)
        A = est.residual_operand_interp(u_n, u_prev, dt, prob, fit)
        sq = oracles.oracle_residual_parts(
            u_n, lambda c, x, y: oracles.eval_field(A, c, x, y),
            prob, fit, variant="indicator")
        assert np.max(np.abs(got - np.sqrt(sq))) < 1e-10 * max(1.0, got.max())


# ---------------------------------------------------------------------------
# trivial contracts


def test_conforming_exact_solution_vanishes():
    """Polynomial solution in the space: all residuals ~ 0."""
    prob = case_problem("case1", eps=0.5)

    def u_exact(x, y):
        return x + 2.0 * y

    def f(x, y):
        # -eps lap u + b.grad u = y*1 + (-x)*2
        return y - 2.0 * x
    prob.f = f
    prob.g_d = u_exact
    mesh = hanging_mesh(2, (0, 3))
    u = interpolate(u_exact, mesh, 2)
    fit = build_fitting(mesh, 2, prob)
    _, total = est.stationary_estimate(u, prob, fit)
    assert total < 1e-9


def test_conforming_jumps_vanish():
    # boundary faces measure u - g_d, so use matching Dirichlet data
    prob = case_problem("case2", eps=0.1)
    prob.g_d = lambda x, y: x * x * y + 2 * y
    mesh = create_uniform(DOMAIN, 2)
    u = interpolate(lambda x, y: x * x * y + 2 * y, mesh, 2)
    fit = build_fitting(mesh, 2, prob)
    assert est.zeta_S3(u, prob, fit) < 1e-12


def test_homogeneity(rng):
    """With zero data every term is 1-homogeneous in the solution."""
    prob = case_problem("case3", eps=0.1)
    prob.g_d = lambda x, y: np.zeros(np.shape(x))
    mesh = hanging_mesh(1, (0,))
    fit = build_fitting(mesh, 2, prob)
    u = random_field(mesh, 2, rng)
    u2 = u * 2.0
    p1, t1 = est.stationary_estimate(u, prob, fit)
    p2, t2 = est.stationary_estimate(u2, prob, fit)
    assert np.allclose(p2, 2.0 * p1, rtol=1e-12, atol=1e-13)
    assert abs(t2 - 2.0 * t1) < 1e-12 * t1


def test_static_step_zero_terms(rng):
    """u_n = u_prev with time-constant data: S4 = T1 = T2 = 0."""
    prob = case_problem("case2", eps=0.1)
    mesh = create_uniform(DOMAIN, 2)
    fit = build_fitting(mesh, 2, prob)
    u = random_field(mesh, 2, rng)
    A_prev = est.initial_operand(u, prob, fit)
    terms = est.timestep_terms(u, u, 0.1, prob, fit, aux=mesh, A_prev=None)
    assert terms["S4"] == 0.0
    assert terms["T1"] == 0.0
    # A difference part: A^n - A^{n-1} = -(u - Pi u)/dt = 0 on same mesh
    assert terms["T2"] < 1e-12


def test_report_accumulators():
    r = est.EstimatorReport()
    assert r.zeta_S == 0.0 and r.zeta_T == 0.0
    r.start(s1_0=2.0, s3_0=3.0)
    terms = {"S1": 1.0, "S2": 0.5, "S3": 2.0, "S4": 0.25, "T1": 0.1, "T2": 0.2}
    row1 = r.update(0.1, 0.1, 4, 36, dict(terms), density=1.5)
    # zeta_S^2 = dt(S1^2 + S1_prev^2 + S2^2 + S4^2) + max(S3^2)
    zs2 = 0.1 * (1.0 + 4.0 + 0.25 + 0.0625) + 9.0
    assert abs(row1["zeta_S_acc"] ** 2 - zs2) < 1e-14
    assert abs(row1["zeta_T_acc"] ** 2 - (0.01 + 0.04)) < 1e-14
    assert abs(row1["exponent"] - 0.15) < 1e-15
    assert abs(row1["zeta_full"] ** 2
               - math.exp(0.15) * (zs2 + 0.05)) < 1e-12
    # identical second step: integral parts double, max part unchanged
    row2 = r.update(0.2, 0.1, 4, 36, dict(terms), density=1.5)
    zs2b = 2 * 0.1 * (1.0 + 0.25 + 0.0625) + 0.1 * 4.0 + 9.0 - 0.1 * 1.0
    # careful: prev S1 for step 2 is 1.0, so dt(S1^2 + prev^2) = 0.1*2
    zs2b = 0.1 * (1.0 + 4.0 + 0.25 + 0.0625) + 0.1 * (1.0 + 1.0 + 0.25 + 0.0625) + 9.0
    assert abs(row2["zeta_S_acc"] ** 2 - zs2b) < 1e-13
    assert abs(row2["zeta_T_acc"] ** 2 - 0.1) < 1e-14
    # monotonicity
    assert row2["zeta_S_acc"] >= row1["zeta_S_acc"]
    assert row2["zeta_full"] >= row1["zeta_full"]


def test_csv_format(tmp_path):
    r = est.EstimatorReport()
    r.start(0.0, 0.0)
    r.update(0.5, 0.5, 4, 36,
             {"S1": 1.5, "S2": 0.0, "S3": 0.1, "S4": 0.0, "T1": 0.0, "T2": 0.0},
             density=0.0)
    path = tmp_path / "log.csv"
    r.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# estimator log v1"
    assert lines[1] == ",".join(est.CSV_COLUMNS)
    fields = lines[2].split(",")
    assert fields[0] == "1" and fields[3] == "4" and fields[4] == "36"
    assert fields[5] == repr(1.5)
