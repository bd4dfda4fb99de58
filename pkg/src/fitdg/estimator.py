"""A posteriori error estimation for the fitted dG scheme.

Implements the stationary residual estimator, the per-step terms
zeta_S1..zeta_S4 / zeta_T1..zeta_T2 of the fully discrete parabolic bound,
their time accumulators, the refinement indicator used to drive adaptivity
and the Kelly baseline indicator.

Conventions (fixed here, mirrored by the naive test oracles):

* Patch quantities use the two-cell face patch.
* Internal-face contributions are split 1/2-1/2 between the adjacent
  cells; boundary faces belong wholly to their owner cell.
* On Dirichlet boundary faces the jump of the solution means u_h - g_D;
  Neumann faces carry no jump terms.  Time jumps of the Dirichlet data are
  not supported (time-constant g_D assumed in zeta_S4).
* Terms on the union of consecutive meshes are evaluated on the auxiliary
  refine-only mesh; projections onto the current space go through it.
* Time integrals over a step: coefficients built from the weight are
  frozen at the interval endpoints (pointwise maximum of the two); the
  polynomial-in-time parts use a 2-point Gauss rule, exact whenever the
  data is constant or linear in time.
* The logged per-step zeta_T1/zeta_T2 are square roots of the full time
  integral over the step; zeta_S1..S4 are instantaneous values and enter
  the accumulator scaled by dt.
* With eps == 0 (pure transport) every eps-scaled coefficient group is
  dropped and the mesh-size fallbacks of the fitting data apply; zeta_T1
  (an eps^-1 term) is reported as 0 in that regime.
"""

import math

import numpy as np

from . import mesh as meshmod
from .exp_fitting import build_fitting
from .fem_core import (DgField, cell_quad_points, cell_quad_weights,
                       face_ops, interpolate, project_values, transfer)
from .reference import element


# ---------------------------------------------------------------------------
# residual operands


def initial_operand(u0, prob, fitting=None, nq=None):
    """A^0 = projection of f^0 + delta^0 u^0 (no backward difference)."""
    mesh, k = u0.mesh, u0.k
    pts = cell_quad_points(mesh, k, nq)
    x, y = pts[:, :, 0], pts[:, :, 1]
    dv = fitting.delta(x, y) if fitting is not None else _delta_values(prob, x, y)
    vals = prob.f(x, y) + dv * u0.values(nq)
    return project_values(vals, mesh, k, nq)


def _delta_values(prob, x, y):
    """Pointwise artificial reaction per the problem's policy."""
    pol = prob.delta
    if pol.kind == "zero":
        return np.zeros(np.shape(x))
    if pol.kind == "fixed":
        return np.full(np.shape(x), pol.value)
    # the auto policy needs the fitting split; callers pass it explicitly
    raise ValueError("auto delta policy requires FittingData (use fitting.delta)")


def project_previous(u_prev, target, aux=None):
    """L2 projection of u_prev onto the space over `target`.

    Exact for nested quadtree meshes: prolong to the auxiliary (union)
    mesh, then L2-coarsen back down to the target.
    """
    if u_prev.mesh is target:
        return u_prev
    if aux is None:
        aux = meshmod.common_refinement(u_prev.mesh, target)
    return transfer(transfer(u_prev, aux), target)


def residual_operand(u_n, u_prev, dt, prob, fitting=None, aux=None, nq=None):
    """A^n = Pi(f^n + delta^n u^n) - (u^n - Pi u^{n-1}) / dt on u_n's mesh."""
    mesh, k = u_n.mesh, u_n.k
    pts = cell_quad_points(mesh, k, nq)
    x, y = pts[:, :, 0], pts[:, :, 1]
    dv = fitting.delta(x, y) if fitting is not None else _delta_values(prob, x, y)
    src = project_values(prob.f(x, y) + dv * u_n.values(nq), mesh, k, nq)
    pu = project_previous(u_prev, mesh, aux)
    return src - (u_n - pu) * (1.0 / dt)


def residual_operand_interp(u_n, u_prev, dt, prob, fitting=None):
    """Nodal-interpolant variant of A^n (union-mesh free, for marking)."""
    mesh, k = u_n.mesh, u_n.k
    el = element(k)
    x = mesh.x0[:, None] + el.nodes[None, :, 0] * mesh.hx[:, None]
    y = mesh.y0[:, None] + el.nodes[None, :, 1] * mesh.hy[:, None]
    dv = fitting.delta(x, y) if fitting is not None else _delta_values(prob, x, y)
    src = prob.f(x, y) + dv * u_n.coeffs
    if u_prev.mesh is mesh:
        pu = u_prev.coeffs
    else:
        from .exp_fitting import _FieldEval
        pu = _FieldEval(u_prev).value(x, y)
    return DgField(mesh, k, src - (u_n.coeffs - pu) / dt)


# ---------------------------------------------------------------------------
# face machinery


def _face_integrals(u, prob, nq=None):
    """Per-face integrals for a field: (jump_sq, flux_sq), aligned with
    mesh.faces.

    jump_sq[F] = int_F [u]^2   (interior and Dirichlet faces; u - g_D on the
    latter; 0 on Neumann faces),
    flux_sq[F] = int_F ([eps grad u] . n)^2   (interior faces only).
    """
    mesh, k = u.mesh, u.k
    eps = prob.eps
    groups, w1 = face_ops(mesh, k, nq)
    nfc = len(mesh.faces)
    jump_sq = np.zeros(nfc)
    flux_sq = np.zeros(nfc)
    for g in groups:
        if g.plus is None:
            if g.bc != "dirichlet":
                continue
            gd = prob.g_d(g.pts[:, :, 0], g.pts[:, :, 1])
            jump = u.coeffs[g.minus] @ g.Tm.T - gd
        else:
            jump = u.coeffs[g.minus] @ g.Tm.T - u.coeffs[g.plus] @ g.Tp.T
            if eps > 0:
                hm = mesh.hx[g.minus] if g.axis == 0 else mesh.hy[g.minus]
                hp = mesh.hx[g.plus] if g.axis == 0 else mesh.hy[g.plus]
                dn_m = (u.coeffs[g.minus] @ g.Gm[:, :, g.axis].T) / hm[:, None]
                dn_p = (u.coeffs[g.plus] @ g.Gp[:, :, g.axis].T) / hp[:, None]
                fj = eps * (dn_m - dn_p)
                flux_sq[g.idx] = g.h * np.sum(w1[None, :] * fj ** 2, axis=1)
        jump_sq[g.idx] = g.h * np.sum(w1[None, :] * jump ** 2, axis=1)
    return jump_sq, flux_sq


def _jump_coefficient(prob, fitting, variant="estimator"):
    """The coefficient multiplying int_F [u]^2 per face.

    variant="estimator": the stationary/zeta_S1 group with the
    alpha^2 eps sup_F|grad eta|^2 / sup_F(omega) * max_patch(lambda^2) term.
    variant="indicator": the marking-indicator group where that term reads
    sup_F(omega) alpha^2 eps sup_F|grad eta|^2 / inf_patch(L), falling back
    to the estimator form on cells where inf L <= 0.
    """
    fd = fitting
    eps, sigma, alpha = prob.eps, prob.sigma_for(fd.k), prob.alpha
    h = np.array([f.h for f in fd.mesh.faces])
    a2 = alpha * alpha * eps * fd.face_sup_geta ** 2
    if variant == "indicator":
        with np.errstate(divide="ignore"):
            term = np.where(fd.L_min_F > 0,
                            fd.face_sup_w * a2 / np.where(fd.L_min_F > 0, fd.L_min_F, 1.0),
                            a2 / fd.face_sup_w * fd.lam2_max_F)
    else:
        term = a2 / fd.face_sup_w * fd.lam2_max_F
    c = (sigma * eps / h) * (fd.w_max_F + fd.gamma_F * sigma * eps + term) \
        + fd.beta_F * fd.face_sup_b ** 2 \
        + h * fd.sup_wL_F
    if eps > 0:
        c = c + fd.w_max_F * h / eps * fd.sup_bfit_F ** 2
    return c


def _split_to_cells(mesh, per_face):
    """Attribute per-face values to cells: 1/2-1/2 interior, all to owner."""
    out = np.zeros(mesh.n_cells)
    for fi, face in enumerate(mesh.faces):
        v = per_face[fi]
        if face.interior:
            out[face.minus] += 0.5 * v
            out[face.plus] += 0.5 * v
        else:
            out[face.minus] += v
    return out


def _residual_parts(u, source_vals, prob, fitting, variant="estimator", nq=None):
    """Per-cell squared indicator: interior residual + shared face terms.

    source_vals are the values of the residual source (f for the stationary
    estimator, A^n for the evolution terms) at the cell quadrature points.
    """
    mesh, k = u.mesh, u.k
    eps = prob.eps
    pts = cell_quad_points(mesh, k, nq)
    wq = cell_quad_weights(mesh, k, nq)
    x, y = pts[:, :, 0], pts[:, :, 1]
    bx, by = prob.conv.eval(x, y)
    grads = u.gradients(nq)
    r = source_vals + eps * u.laplacians(nq) \
        - bx * grads[:, :, 0] - by * grads[:, :, 1] \
        - fitting.delta(x, y) * u.values(nq)
    cell_sq = fitting.lam ** 2 * np.sum(wq * r * r, axis=1)

    jump_sq, flux_sq = _face_integrals(u, prob, nq)
    per_face = fitting.beta_F * flux_sq \
        + _jump_coefficient(prob, fitting, variant) * jump_sq
    return cell_sq + _split_to_cells(mesh, per_face)


# ---------------------------------------------------------------------------
# public estimators


def stationary_estimate(u_h, prob, fitting, nq=None):
    """Stationary residual estimator: (per-cell eta_K, total eta)."""
    pts = cell_quad_points(u_h.mesh, u_h.k, nq)
    fvals = prob.f(pts[:, :, 0], pts[:, :, 1])
    sq = _residual_parts(u_h, fvals, prob, fitting, "estimator", nq)
    return np.sqrt(sq), math.sqrt(float(sq.sum()))


def zeta_S1(u, A, prob, fitting, nq=None):
    """The instantaneous space residual with A in the interior residual."""
    sq = _residual_parts(u, A.values(nq), prob, fitting, "estimator", nq)
    return math.sqrt(float(sq.sum()))


def zeta_S3(u, prob, fitting, nq=None):
    """Weighted solution-jump term: sum_F sup_patch(omega) h_F |[u]|_F^2."""
    jump_sq, _ = _face_integrals(u, prob, nq)
    h = np.array([f.h for f in u.mesh.faces])
    return math.sqrt(float(np.sum(fitting.w_max_F * h * jump_sq)))


def local_indicator(u_n, u_prev, dt, prob, fitting, nq=None):
    """Per-cell marking indicator (nodal-interpolant residual operand)."""
    A = residual_operand_interp(u_n, u_prev, dt, prob, fitting)
    sq = _residual_parts(u_n, A.values(nq), prob, fitting, "indicator", nq)
    return np.sqrt(sq)


def kelly_indicator(u_h, eps, nq=None):
    """Baseline: per-cell (1/2 sum_{F in dK\\dOmega} h_F |[eps grad u]|_F^2)^(1/2)."""
    class _P:
        pass
    p = _P()
    p.eps = eps
    p.g_d = lambda x, y: np.zeros(np.shape(x))
    _, flux_sq = _face_integrals(u_h, p, nq)
    h = np.array([f.h for f in u_h.mesh.faces])
    per_face = h * flux_sq
    out = np.zeros(u_h.mesh.n_cells)
    for fi, face in enumerate(u_h.mesh.faces):
        if face.interior:
            out[face.minus] += 0.5 * per_face[fi]
            out[face.plus] += 0.5 * per_face[fi]
    return np.sqrt(out)


# ---------------------------------------------------------------------------
# per-step terms


def _endpoint_max(fn_a, fn_b, x, y):
    return np.maximum(fn_a(x, y), fn_b(x, y))


def timestep_terms(u_n, u_prev, dt, prob_n, fit_n, prob_prev=None, fit_prev=None,
                   aux=None, fit_aux=None, A_prev=None, nq=None):
    """All per-step estimator terms for the step t_{n-1} -> t_n.

    u_n lives on the current mesh, u_prev on the previous one; aux must be
    a common refinement of the two (defaults to the exact union mesh).
    A_prev is the residual operand of the previous step (initial_operand of
    u_prev if the run starts here).  Returns a dict with keys
    S1, S2, S3, S4, T1, T2 and the current operand under "A".
    """
    if prob_prev is None:
        prob_prev = prob_n
    if fit_prev is None:
        fit_prev = fit_n
    mesh, k = u_n.mesh, u_n.k
    if aux is None:
        aux = mesh if u_prev.mesh is mesh else meshmod.common_refinement(u_prev.mesh, mesh)
    if fit_aux is None:
        fit_aux = fit_n if aux is mesh else build_fitting(aux, k, prob_n, nq=nq)
    if A_prev is None:
        A_prev = initial_operand(u_prev, prob_prev, fit_prev, nq)

    eps = prob_n.eps
    un_a = transfer(u_n, aux) if aux is not mesh else u_n
    up_a = transfer(u_prev, aux) if aux is not u_prev.mesh else u_prev

    A_n = residual_operand(u_n, u_prev, dt, prob_n, fit_n, aux, nq)
    s1 = zeta_S1(u_n, A_n, prob_n, fit_n, nq)

    # zeta_S2: the projection defect of f + delta u + u_prev/dt, measured on
    # the union mesh against the projection onto the *current* space.
    pts_a = cell_quad_points(aux, k, nq)
    wq_a = cell_quad_weights(aux, k, nq)
    xa, ya = pts_a[:, :, 0], pts_a[:, :, 1]
    g_vals = prob_n.f(xa, ya) + fit_n.delta(xa, ya) * un_a.values(nq) \
        + up_a.values(nq) / dt
    proj_n = transfer(project_values(g_vals, aux, k, nq), mesh)
    defect = g_vals - (transfer(proj_n, aux) if aux is not mesh else proj_n).values(nq)
    s2 = math.sqrt(float(np.sum(fit_aux.lam ** 2 * np.sum(wq_a * defect ** 2, axis=1))))

    s3 = zeta_S3(u_n, prob_n, fit_n, nq)

    # zeta_S4: jump of the discrete time derivative on the union mesh.
    dudt = (un_a - up_a) * (1.0 / dt)
    jump_sq, _ = _face_integrals(dudt, _zero_bc(eps), nq)
    h_a = np.array([f.h for f in aux.faces])
    s4 = math.sqrt(float(np.sum(fit_aux.coeff_S4_F * h_a * jump_sq)))

    # zeta_T1: convection time-interpolation mismatch (eps^-1 scaled).
    same_conv = prob_prev.conv is prob_n.conv
    if same_conv or eps == 0.0:
        t1 = 0.0
    else:
        bxn, byn = prob_n.conv.eval(xa, ya)
        bxp, byp = prob_prev.conv.eval(xa, ya)
        w_end = _endpoint_max(_omega_fn(fit_n), _omega_fn(fit_prev), xa, ya)
        du = un_a.values(nq) - up_a.values(nq)
        spatial = np.sum(wq_a * w_end * ((bxn - bxp) ** 2 + (byn - byp) ** 2) * du * du)
        t1 = math.sqrt(dt / 30.0 / eps * float(spatial))

    # zeta_T2: data/coefficient time-variation term, 2-point Gauss in time.
    t2 = _zeta_T2(u_n, u_prev, un_a, up_a, A_n, A_prev, dt,
                  prob_n, fit_n, prob_prev, fit_prev, aux, nq)

    return {"S1": s1, "S2": s2, "S3": s3, "S4": s4, "T1": t1, "T2": t2, "A": A_n}


def _omega_fn(fit):
    return fit.omega


def _zero_bc(eps):
    class _P:
        pass
    p = _P()
    p.eps = eps
    p.g_d = lambda x, y: np.zeros(np.shape(x))
    return p


def _zeta_T2(u_n, u_prev, un_a, up_a, A_n, A_prev, dt,
             prob_n, fit_n, prob_prev, fit_prev, aux, nq=None):
    k = u_n.k
    pts_a = cell_quad_points(aux, k, nq)
    wq_a = cell_quad_weights(aux, k, nq)
    xa, ya = pts_a[:, :, 0], pts_a[:, :, 1]

    un_v = un_a.values(nq)
    up_v = up_a.values(nq)
    An_v = (transfer(A_n, aux) if A_n.mesh is not aux else A_n).values(nq)
    Ap_v = (transfer(A_prev, aux) if A_prev.mesh is not aux else A_prev).values(nq)

    # endpoint-max of the omega-bearing coefficient omega * min{1/L, 1/eps}
    cn = fit_n.omega(xa, ya) * fit_n.time_coeff(xa, ya) ** 2
    cp = fit_prev.omega(xa, ya) * fit_prev.time_coeff(xa, ya) ** 2
    weight = np.maximum(cn, cp)

    static = prob_prev is prob_n and fit_prev is fit_n
    fn = prob_n.f(xa, ya)
    dn = fit_n.delta(xa, ya)
    if static:
        fp, dp = fn, dn
        gb_n = gb_p = None
    else:
        fp = prob_prev.f(xa, ya)
        dp = fit_prev.delta(xa, ya)
        gb_n = _reaction_part(prob_n, fit_n, xa, ya)
        gb_p = _reaction_part(prob_prev, fit_prev, xa, ya)
        bxn, byn = prob_n.conv.eval(xa, ya)
        bxp, byp = prob_prev.conv.eval(xa, ya)
        gexn, geyn = fit_n.grad_eta(xa, ya)
        gexp, geyp = fit_prev.grad_eta(xa, ya)

    alpha, eps = prob_n.alpha, prob_n.eps
    total = 0.0
    for sg in (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)):
        lam_n, lam_p = sg, 1.0 - sg
        if static:
            integrand = lam_p * (dn * (up_v - un_v) + (An_v - Ap_v))
        else:
            f_s = lam_p * fp + lam_n * fn
            d_s = lam_p * dp + lam_n * dn
            u_hat = lam_n * un_v + lam_p * up_v
            # interpolated convection / potential gradient at time s
            bx_s = lam_p * bxp + lam_n * bxn
            by_s = lam_p * byp + lam_n * byn
            gex_s = lam_p * gexp + lam_n * gexn
            gey_s = lam_p * geyp + lam_n * geyn
            gb_s = gex_s * (bx_s - alpha * eps * gex_s) \
                + gey_s * (by_s - alpha * eps * gey_s)
            theta_n = (dn - d_s) + 0.5 * alpha * (gb_n - gb_s)
            theta_p = (dp - d_s) + 0.5 * alpha * (gb_p - gb_s)
            integrand = (f_s - fn) + (d_s * u_hat - dn * un_v) \
                + lam_p * (An_v - Ap_v) \
                + lam_n * theta_n * un_v + lam_p * theta_p * up_v
        total += 0.5 * dt * float(np.sum(wq_a * weight * integrand ** 2))
    return math.sqrt(total)


def _reaction_part(prob, fit, x, y):
    """grad(eta) . (b - alpha eps grad(eta)) at the given points."""
    gx, gy = fit.grad_eta(x, y)
    bx, by = prob.conv.eval(x, y)
    return gx * (bx - prob.alpha * prob.eps * gx) + gy * (by - prob.alpha * prob.eps * gy)


# ---------------------------------------------------------------------------
# accumulation / logging


CSV_COLUMNS = ("step", "t", "dt", "n_cells", "n_dofs",
               "zeta_S1", "zeta_S2", "zeta_S3", "zeta_S4",
               "zeta_T1", "zeta_T2",
               "zeta_S_acc", "zeta_T_acc", "exponent", "zeta_full")


class EstimatorReport:
    """Running accumulators for the fully discrete bound.

    zeta_S^2 = sum_n dt (S1_n^2 + S1_{n-1}^2 + S2_n^2 + S4_n^2) + max_n S3_n^2
    zeta_T^2 = sum_n (T1_n^2 + T2_n^2)       (terms carry their time integral)
    zeta^2   = exp(exponent) (zeta_S^2 + zeta_T^2)

    start() seeds the n=0 quantities (S1 at the initial operand, the S3 max
    over all n including n=0); update() folds in one step and appends a
    CSV row.
    """

    def __init__(self):
        self.rows = []
        self._s_int = 0.0
        self._s3_max = 0.0
        self._t_acc = 0.0
        self.exponent = 0.0
        self._prev_s1 = 0.0
        self.step = 0

    def start(self, s1_0, s3_0):
        self._prev_s1 = s1_0
        self._s3_max = s3_0 ** 2

    def update(self, t, dt, n_cells, n_dofs, terms, density=0.0):
        self.step += 1
        self._s_int += dt * (terms["S1"] ** 2 + self._prev_s1 ** 2
                             + terms["S2"] ** 2 + terms["S4"] ** 2)
        self._s3_max = max(self._s3_max, terms["S3"] ** 2)
        self._t_acc += terms["T1"] ** 2 + terms["T2"] ** 2
        self.exponent += dt * density
        self._prev_s1 = terms["S1"]
        zs = math.sqrt(self._s_int + self._s3_max)
        zt = math.sqrt(self._t_acc)
        zfull = math.sqrt(math.exp(self.exponent) * (zs * zs + zt * zt))
        self.rows.append({
            "step": self.step, "t": t, "dt": dt,
            "n_cells": n_cells, "n_dofs": n_dofs,
            "zeta_S1": terms["S1"], "zeta_S2": terms["S2"],
            "zeta_S3": terms["S3"], "zeta_S4": terms["S4"],
            "zeta_T1": terms["T1"], "zeta_T2": terms["T2"],
            "zeta_S_acc": zs, "zeta_T_acc": zt,
            "exponent": self.exponent, "zeta_full": zfull,
        })
        return self.rows[-1]

    @property
    def zeta_S(self):
        return math.sqrt(self._s_int + self._s3_max)

    @property
    def zeta_T(self):
        return math.sqrt(self._t_acc)

    @property
    def zeta_full(self):
        return math.sqrt(math.exp(self.exponent) * (self.zeta_S ** 2 + self.zeta_T ** 2))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# estimator log v1\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows:
                out = []
                for c in CSV_COLUMNS:
                    v = row[c]
                    out.append(str(v) if isinstance(v, int) else repr(float(v)))
                fh.write(",".join(out) + "\n")
