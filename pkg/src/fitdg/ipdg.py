"""Interior-penalty dG discretisation of convection-diffusion.

The scheme is the symmetric interior-penalty method with upwinded
convection fluxes.  The artificial reaction delta used in the analysis is
*not* assembled: adding delta*u to both sides makes the linear systems of
the reaction-free and reaction scheme identical, so solvers always run the
delta = 0 form.  With eps = 0 the discretisation degenerates to pure
upwind transport (no penalty, no diffusive fluxes).
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem_core import (DgField, cell_quad_points, cell_quad_weights,
                       face_ops, project_values, transfer)
from .reference import cell_tabulation, face_rule, reference_mass


def dof_count(mesh, k):
    return mesh.n_cells * (k + 1) ** 2


def mass_matrix(mesh, k, nq=None):
    """Block-diagonal DG mass matrix."""
    nb = (k + 1) ** 2
    M = reference_mass(k, nq)
    blocks = mesh.areas[:, None, None] * M[None, :, :]
    base = np.arange(mesh.n_cells)[:, None, None] * nb
    rows = base + np.repeat(np.arange(nb), nb).reshape(1, nb, nb)
    cols = base + np.tile(np.arange(nb), nb).reshape(1, nb, nb)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(mesh.n_cells * nb,) * 2)


def _axis_h(mesh, cells, axis):
    return (mesh.hx if axis == 0 else mesh.hy)[cells]


def assemble_system(mesh, k, prob, nq=None):
    """The bilinear-form matrix B (diffusion + SIP fluxes + upwinded
    convection); delta-free by construction."""
    nb = (k + 1) ** 2
    eps = prob.eps
    sigma = prob.sigma_for(k)
    _, wts, phi, grad, _, _ = cell_tabulation(k, nq)
    gx, gy = grad[:, :, 0], grad[:, :, 1]
    wq = cell_quad_weights(mesh, k, nq)
    pts = cell_quad_points(mesh, k, nq)
    bx, by = prob.conv.eval(pts[:, :, 0], pts[:, :, 1])

    rows_l, cols_l, vals_l = [], [], []

    def add_blocks(test_cells, trial_cells, blocks):
        nf = len(np.atleast_1d(test_cells))
        shape = (nf, nb, nb)
        base_r = np.asarray(test_cells)[:, None, None] * nb
        base_c = np.asarray(trial_cells)[:, None, None] * nb
        rows_l.append(np.broadcast_to(base_r + np.arange(nb)[None, :, None], shape).ravel())
        cols_l.append(np.broadcast_to(base_c + np.arange(nb)[None, None, :], shape).ravel())
        vals_l.append(np.broadcast_to(np.asarray(blocks), shape).ravel())

    # volume terms
    K = np.einsum("nq,qa,qb->nab", wq * bx / mesh.hx[:, None], phi, gx)
    K += np.einsum("nq,qa,qb->nab", wq * by / mesh.hy[:, None], phi, gy)
    if eps > 0:
        K += eps * np.einsum("nq,qa,qb->nab", wq / mesh.hx[:, None] ** 2, gx, gx)
        K += eps * np.einsum("nq,qa,qb->nab", wq / mesh.hy[:, None] ** 2, gy, gy)
    add_blocks(np.arange(mesh.n_cells), np.arange(mesh.n_cells), K)

    groups, w1 = face_ops(mesh, k, nq)
    for g in groups:
        bxf, byf = prob.conv.eval(g.pts[:, :, 0], g.pts[:, :, 1])
        if g.plus is not None:
            bn = bxf if g.axis == 0 else byf   # normal minus -> plus (+axis)
            if eps > 0:
                Gm = g.Gm[:, :, g.axis]
                Gp = g.Gp[:, :, g.axis]
                hm = _axis_h(mesh, g.minus, g.axis)
                hp = _axis_h(mesh, g.plus, g.axis)
                M_mm = g.Tm.T @ (w1[:, None] * Gm)   # (test a, trial b)
                M_mp = g.Tm.T @ (w1[:, None] * Gp)
                M_pm = g.Tp.T @ (w1[:, None] * Gm)
                M_pp = g.Tp.T @ (w1[:, None] * Gp)
                cm = (g.h / hm)[:, None, None]
                cp = (g.h / hp)[:, None, None]
                # -eps<avg(dn u), [v]> with [v] = v- - v+
                add_blocks(g.minus, g.minus, -0.5 * eps * cm * M_mm[None])
                add_blocks(g.minus, g.plus, -0.5 * eps * cp * M_mp[None])
                add_blocks(g.plus, g.minus, +0.5 * eps * cm * M_pm[None])
                add_blocks(g.plus, g.plus, +0.5 * eps * cp * M_pp[None])
                # -eps<avg(dn v), [u]>  (transpose blocks)
                add_blocks(g.minus, g.minus, -0.5 * eps * cm * np.swapaxes(M_mm, 0, 1)[None])
                add_blocks(g.plus, g.minus, -0.5 * eps * cp * np.swapaxes(M_mp, 0, 1)[None])
                add_blocks(g.minus, g.plus, +0.5 * eps * cm * np.swapaxes(M_pm, 0, 1)[None])
                add_blocks(g.plus, g.plus, +0.5 * eps * cp * np.swapaxes(M_pp, 0, 1)[None])
                # penalty (sigma eps / h) <[u],[v]>; the h cancels the jacobian
                P_mm = g.Tm.T @ (w1[:, None] * g.Tm)
                P_mp = g.Tm.T @ (w1[:, None] * g.Tp)
                P_pp = g.Tp.T @ (w1[:, None] * g.Tp)
                se = sigma * eps
                ones = np.ones(len(g.idx))[:, None, None]
                add_blocks(g.minus, g.minus, se * ones * P_mm[None])
                add_blocks(g.minus, g.plus, -se * ones * P_mp[None])
                add_blocks(g.plus, g.minus, -se * ones * np.swapaxes(P_mp, 0, 1)[None])
                add_blocks(g.plus, g.plus, se * ones * P_pp[None])
            # upwind convection
            wneg = (w1[None, :] * g.h[:, None]) * np.maximum(-bn, 0.0)
            wpos = (w1[None, :] * g.h[:, None]) * np.maximum(bn, 0.0)
            add_blocks(g.minus, g.minus, np.einsum("fq,qa,qb->fab", wneg, g.Tm, g.Tm))
            add_blocks(g.minus, g.plus, -np.einsum("fq,qa,qb->fab", wneg, g.Tm, g.Tp))
            add_blocks(g.plus, g.plus, np.einsum("fq,qa,qb->fab", wpos, g.Tp, g.Tp))
            add_blocks(g.plus, g.minus, -np.einsum("fq,qa,qb->fab", wpos, g.Tp, g.Tm))
        else:
            bn = (bxf if g.axis == 0 else byf) * g.sign  # outward normal
            if eps > 0 and g.bc == "dirichlet":
                Gm = g.Gm[:, :, g.axis] * g.sign
                hm = _axis_h(mesh, g.minus, g.axis)
                M_mm = g.Tm.T @ (w1[:, None] * Gm)
                cm = (g.h / hm)[:, None, None]
                add_blocks(g.minus, g.minus, -eps * cm * M_mm[None])
                add_blocks(g.minus, g.minus, -eps * cm * np.swapaxes(M_mm, 0, 1)[None])
                P_mm = g.Tm.T @ (w1[:, None] * g.Tm)
                add_blocks(g.minus, g.minus,
                           sigma * eps * np.ones(len(g.idx))[:, None, None] * P_mm[None])
            wneg = (w1[None, :] * g.h[:, None]) * np.maximum(-bn, 0.0)
            add_blocks(g.minus, g.minus, np.einsum("fq,qa,qb->fab", wneg, g.Tm, g.Tm))

    n = dof_count(mesh, k)
    return sp.csr_matrix((np.concatenate(vals_l),
                          (np.concatenate(rows_l), np.concatenate(cols_l))),
                         shape=(n, n))


def assemble_rhs(mesh, k, prob, nq=None):
    """Load vector: volume source plus boundary data terms."""
    nb = (k + 1) ** 2
    eps = prob.eps
    sigma = prob.sigma_for(k)
    _, wts, phi, _, _, _ = cell_tabulation(k, nq)
    wq = cell_quad_weights(mesh, k, nq)
    pts = cell_quad_points(mesh, k, nq)
    rhs = np.zeros(dof_count(mesh, k))
    fvals = prob.f(pts[:, :, 0], pts[:, :, 1])
    rhs += ((wq * fvals) @ phi).ravel()

    groups, w1 = face_ops(mesh, k, nq)
    for g in groups:
        if g.plus is not None:
            continue
        xf, yf = g.pts[:, :, 0], g.pts[:, :, 1]
        bxf, byf = prob.conv.eval(xf, yf)
        bn = (bxf if g.axis == 0 else byf) * g.sign
        wf = w1[None, :] * g.h[:, None]
        if g.bc == "dirichlet":
            gd = np.broadcast_to(np.asarray(prob.g_d(xf, yf), dtype=float), xf.shape)
            loc = np.einsum("fq,qa->fa", wf * np.maximum(-bn, 0.0) * gd, g.Tm)
            if eps > 0:
                Gm = g.Gm[:, :, g.axis] * g.sign
                hm = _axis_h(mesh, g.minus, g.axis)
                loc += -eps / hm[:, None] * np.einsum("fq,qa->fa", wf * gd, Gm)
                loc += sigma * eps * np.einsum("fq,qa->fa", (wf / g.h[:, None]) * gd, g.Tm)
            np.add.at(rhs.reshape(mesh.n_cells, nb), g.minus, loc)
        elif g.bc == "neumann" and prob.g_n is not None:
            gn = np.broadcast_to(np.asarray(prob.g_n(xf, yf), dtype=float), xf.shape)
            loc = np.einsum("fq,qa->fa", wf * gn, g.Tm)
            np.add.at(rhs.reshape(mesh.n_cells, nb), g.minus, loc)
    return rhs


def solve_stationary(mesh, k, prob, nq=None):
    B = assemble_system(mesh, k, prob, nq)
    rhs = assemble_rhs(mesh, k, prob, nq)
    coeffs = spla.spsolve(B.tocsc(), rhs)
    return DgField(mesh, k, coeffs.reshape(mesh.n_cells, (k + 1) ** 2))


class ImplicitEuler:
    """Backward-Euler stepper; factorises (M/dt + B) once per (mesh, dt)."""

    def __init__(self, mesh, k, prob, dt, nq=None):
        self.mesh, self.k, self.prob, self.dt = mesh, k, prob, dt
        self.nq = nq
        self.M = mass_matrix(mesh, k, nq)
        self.B = assemble_system(mesh, k, prob, nq)
        self.lu = spla.splu((self.M / dt + self.B).tocsc())

    def step(self, u_prev, rhs=None):
        """One step from u_prev (a DgField on this mesh; transfer first if
        the mesh changed).  rhs defaults to the stationary load vector."""
        if u_prev.mesh is not self.mesh:
            u_prev = transfer(u_prev, self.mesh)
        if rhs is None:
            rhs = assemble_rhs(self.mesh, self.k, self.prob, self.nq)
        b = self.M @ u_prev.coeffs.ravel() / self.dt + rhs
        coeffs = self.lu.solve(b)
        return DgField(self.mesh, self.k, coeffs.reshape(u_prev.coeffs.shape))


def bilinear_apply(w, v, prob, fitting=None, weighted=False, reaction=True, nq=None):
    """Evaluate the (reaction-augmented) dG bilinear form B(w, omega*v).

    With weighted=True the test function is multiplied by the fitting
    weight omega; the flux averages use the cell-wise projection of
    omega*v as in the inconsistent formulation (a no-op when omega == 1
    and v is discrete).  reaction=True adds the (delta w, omega v) term.
    """
    mesh, k = w.mesh, w.k
    eps = prob.eps
    sigma = prob.sigma_for(k)
    if fitting is None or not weighted:
        omega = lambda x, y: np.ones(np.shape(x))
        grad_omega = lambda x, y: (np.zeros(np.shape(x)), np.zeros(np.shape(x)))
    else:
        omega = fitting.omega
        grad_omega = fitting.grad_omega
    delta_fn = fitting.delta if (fitting is not None and reaction) else None

    wq = cell_quad_weights(mesh, k, nq)
    pts = cell_quad_points(mesh, k, nq)
    x, y = pts[:, :, 0], pts[:, :, 1]
    bx, by = prob.conv.eval(x, y)
    om = omega(x, y)
    gox, goy = grad_omega(x, y)
    wv = w.values(nq)
    gw = w.gradients(nq)
    vv = v.values(nq)
    gv = v.gradients(nq)
    # grad(omega v) = omega grad v + v grad omega
    gwx = om * gv[:, :, 0] + vv * gox
    gwy = om * gv[:, :, 1] + vv * goy
    total = np.sum(wq * (eps * (gw[:, :, 0] * gwx + gw[:, :, 1] * gwy)
                         + (bx * gw[:, :, 0] + by * gw[:, :, 1]) * om * vv))
    if delta_fn is not None:
        total += np.sum(wq * delta_fn(x, y) * wv * om * vv)

    # cell-wise projection of omega*v for the flux averages
    pv = project_values(om * vv, mesh, k, nq)

    groups, w1 = face_ops(mesh, k, nq)
    for g in groups:
        xf, yf = g.pts[:, :, 0], g.pts[:, :, 1]
        bxf, byf = prob.conv.eval(xf, yf)
        omf = omega(xf, yf)
        wf = w1[None, :] * g.h[:, None]
        wm = w.coeffs[g.minus] @ g.Tm.T
        vm = v.coeffs[g.minus] @ g.Tm.T
        pvm_n = np.einsum("fa,qa->fq", pv.coeffs[g.minus], g.Gm[:, :, g.axis]) \
            / _axis_h(mesh, g.minus, g.axis)[:, None]
        wm_n = np.einsum("fa,qa->fq", w.coeffs[g.minus], g.Gm[:, :, g.axis]) \
            / _axis_h(mesh, g.minus, g.axis)[:, None]
        if g.plus is not None:
            bn = bxf if g.axis == 0 else byf
            wp = w.coeffs[g.plus] @ g.Tp.T
            vp = v.coeffs[g.plus] @ g.Tp.T
            pvp_n = np.einsum("fa,qa->fq", pv.coeffs[g.plus], g.Gp[:, :, g.axis]) \
                / _axis_h(mesh, g.plus, g.axis)[:, None]
            wp_n = np.einsum("fa,qa->fq", w.coeffs[g.plus], g.Gp[:, :, g.axis]) \
                / _axis_h(mesh, g.plus, g.axis)[:, None]
            jump_w = wm - wp
            jump_ov = omf * (vm - vp)
            if eps > 0:
                total += np.sum(wf * (-eps * 0.5 * (pvm_n + pvp_n) * jump_w
                                      - eps * 0.5 * (wm_n + wp_n) * jump_ov
                                      + (sigma * eps / g.h[:, None]) * jump_w * jump_ov))
            total += np.sum(wf * (np.maximum(-bn, 0.0) * (wm - wp) * omf * vm
                                  + np.maximum(bn, 0.0) * (wp - wm) * omf * vp))
        else:
            bn = (bxf if g.axis == 0 else byf) * g.sign
            if g.bc == "dirichlet":
                if eps > 0:
                    total += np.sum(wf * (-eps * g.sign * pvm_n * wm
                                          - eps * g.sign * wm_n * omf * vm
                                          + (sigma * eps / g.h[:, None]) * wm * omf * vm))
                total += np.sum(wf * np.maximum(-bn, 0.0) * wm * omf * vm)
            else:
                total += np.sum(wf * np.maximum(-bn, 0.0) * wm * omf * vm)
    return total
