"""Exponential fitting: auxiliary potential, weight function and the
derived cell/face weights used by the a posteriori estimator.

Notation (alpha is the fitting strength, eta the convection potential):

    omega = exp(-alpha * eta)
    G     = alpha*grad(eta).(b - alpha*eps*grad(eta)) - div b + alpha*eps*lap(eta)
    L     = delta + G/2,      M = delta + G     (so M + delta = 2L)

The artificial reaction delta is never assembled into linear systems; it
feeds the estimator and the Gronwall-type exponential accumulator only.
"""

import numpy as np
from dataclasses import dataclass

import scipy.sparse.linalg as spla

from . import cg_space as cg
from .fem_core import DgField, cell_quad_points
from .reference import element, cell_rule, face_rule, side_points


_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


class _FieldEval:
    """Point evaluation (value/gradient/Laplacian) of a cell-wise polynomial
    field at arbitrary physical points, via quadtree location."""

    def __init__(self, field):
        self.field = field

    def _locate(self, x, y):
        shape = np.shape(x)
        xf = np.asarray(x, dtype=float).ravel()
        yf = np.asarray(y, dtype=float).ravel()
        mesh = self.field.mesh
        cells = mesh.locate(xf, yf)
        xr = (xf - mesh.x0[cells]) / mesh.hx[cells]
        yr = (yf - mesh.y0[cells]) / mesh.hy[cells]
        return shape, cells, np.column_stack([xr, yr])

    def value(self, x, y):
        shape, cells, pts = self._locate(x, y)
        phi = element(self.field.k).eval(pts)
        return np.einsum("pa,pa->p", self.field.coeffs[cells], phi).reshape(shape)

    def grad(self, x, y):
        shape, cells, pts = self._locate(x, y)
        el = element(self.field.k)
        mesh = self.field.mesh
        gx = np.einsum("pa,pa->p", self.field.coeffs[cells], el.eval(pts, dx=1)) / mesh.hx[cells]
        gy = np.einsum("pa,pa->p", self.field.coeffs[cells], el.eval(pts, dy=1)) / mesh.hy[cells]
        return gx.reshape(shape), gy.reshape(shape)

    def lap(self, x, y):
        shape, cells, pts = self._locate(x, y)
        el = element(self.field.k)
        mesh = self.field.mesh
        v = np.einsum("pa,pa->p", self.field.coeffs[cells], el.eval(pts, dx=2)) / mesh.hx[cells] ** 2 \
            + np.einsum("pa,pa->p", self.field.coeffs[cells], el.eval(pts, dy=2)) / mesh.hy[cells] ** 2
        return v.reshape(shape)


def solve_potential(mesh, k, conv, sign=1.0):
    """Discrete convection potential: find eta in CG-Q^k, eta = 0 on the
    boundary, with (grad eta, grad v) = sign * (div b, v) for all v.

    sign=+1 reproduces the discrete auxiliary problem as printed (which is
    the weak form of -lap(eta) = div b); sign=-1 yields the Helmholtz
    orientation lap(eta) = div b.
    """
    space = cg.cg_space(mesh, k, dirichlet_sides=(0, 1, 2, 3))
    A, b = cg.assemble_poisson(space, lambda x, y: sign * conv.div(x, y))
    Ar, br, g0 = space.reduce(A, b)
    x = spla.spsolve(Ar, br)
    return space.field(space.expand(x, g0))


@dataclass
class FittingData:
    """Weight field plus all derived cell/face quantities for one mesh."""

    mesh: object
    k: int
    eps: float
    alpha: float
    # pointwise callables
    omega: object
    grad_omega: object
    grad_eta: object
    G: object
    L: object
    M: object
    delta: object
    L_zero: bool
    # per-cell arrays
    w_max: np.ndarray          # sup_K omega
    w_min: np.ndarray          # inf_K omega
    gw_max: np.ndarray         # sup_K |grad omega|
    L_min: np.ndarray          # inf_K L
    S: np.ndarray              # subordinate weight
    lam: np.ndarray            # cell weight lambda_K
    gamma: np.ndarray          # S^2 / inf omega
    # per-face arrays (aligned with mesh.faces)
    beta_F: np.ndarray
    gamma_F: np.ndarray
    w_max_F: np.ndarray        # sup over face patch of omega
    face_sup_w: np.ndarray     # sup over the face itself of omega
    face_sup_geta: np.ndarray  # sup over the face of |grad eta|
    lam2_max_F: np.ndarray     # max over face patch of lambda_K^2
    L_min_F: np.ndarray        # inf over face patch of L
    face_sup_b: np.ndarray     # sup over the face itself of |b|
    sup_wL_F: np.ndarray       # sup over patch of |sqrt(omega)*L|
    sup_bfit_F: np.ndarray     # sup over patch of |b - alpha eps grad eta|
    coeff_S4_F: np.ndarray     # min{ sup(omega/L), sup(omega)/eps } on patch
    pe_L: np.ndarray           # face Peclet number (logged only)

    def time_coeff(self, x, y):
        """Pointwise min{L^{-1/2}, eps^{-1/2}} (eps branch where L <= 0).

        For the pure-transport regime eps == 0 the eps branch degenerates;
        the fallback value 1 keeps the coefficient finite there.
        """
        Lv = self.L(x, y)
        base = 1.0 if self.eps == 0.0 else 1.0 / np.sqrt(self.eps)
        out = np.full(np.shape(Lv), base)
        pos = Lv > 0
        np.minimum(out, 1.0 / np.sqrt(np.where(pos, Lv, 1.0)), where=pos, out=out)
        return out

    def gronwall_density(self):
        """max over the sample points of delta^2 / (2 L) at this time."""
        pts = _sample_points(self.mesh, self.k)
        d = self.delta(pts[:, :, 0], pts[:, :, 1])
        if np.all(d == 0):
            return 0.0
        Lv = self.L(pts[:, :, 0], pts[:, :, 1])
        bad = (d != 0) & (Lv <= 0)
        if np.any(bad):
            raise ValueError("delta > 0 where L <= 0: exponential accumulator undefined")
        r = np.where(d != 0, d * d / (2.0 * np.where(Lv > 0, Lv, 1.0)), 0.0)
        return float(r.max())


def _sample_points(mesh, k, nq=None):
    """Quadrature points plus the four corners, per cell: (n_cells, m, 2)."""
    pts, _ = cell_rule(k, nq)
    ref = np.vstack([pts, _CORNERS])
    x = mesh.x0[:, None] + ref[None, :, 0] * mesh.hx[:, None]
    y = mesh.y0[:, None] + ref[None, :, 1] * mesh.hy[:, None]
    return np.stack([x, y], axis=-1)


def build_fitting(mesh, k, prob, potential=None, nq=None):
    """Assemble the FittingData for a mesh.

    Uses the analytic potential split carried by prob.conv when available;
    otherwise `potential` must be the discrete potential field (from
    solve_potential), or it is computed here.
    """
    conv, eps, alpha = prob.conv, prob.eps, prob.alpha

    if conv.has_analytic_potential:
        ge = conv.grad_eta
        eta = conv.eta
        lap_eta = conv.lap_eta if conv.lap_eta is not None else (lambda x, y: np.zeros(np.shape(x)))

        def grad_eta(x, y):
            gx, gy = ge(x, y)
            shape = np.shape(x)
            return (np.broadcast_to(np.asarray(gx, dtype=float), shape),
                    np.broadcast_to(np.asarray(gy, dtype=float), shape))

        def eta_val(x, y):
            return np.broadcast_to(np.asarray(eta(x, y), dtype=float), np.shape(x))

        def lap_eta_val(x, y):
            return np.broadcast_to(np.asarray(lap_eta(x, y), dtype=float), np.shape(x))
    else:
        if potential is None:
            potential = solve_potential(mesh, k, conv, sign=prob.potential_sign)
        ev = _FieldEval(potential)
        grad_eta = ev.grad
        eta_val = ev.value
        lap_eta_val = ev.lap

    def omega(x, y):
        return np.exp(-alpha * eta_val(x, y))

    def grad_omega(x, y):
        gx, gy = grad_eta(x, y)
        w = omega(x, y)
        return -alpha * w * gx, -alpha * w * gy

    def G(x, y):
        gx, gy = grad_eta(x, y)
        bx, by = conv.eval(x, y)
        return alpha * (gx * (bx - alpha * eps * gx) + gy * (by - alpha * eps * gy)) \
            - conv.div(x, y) + alpha * eps * lap_eta_val(x, y)

    pol = prob.delta
    if pol.kind == "zero":
        delta = lambda x, y: np.zeros(np.shape(x))
    elif pol.kind == "fixed":
        delta = lambda x, y: np.full(np.shape(x), pol.value)
    else:  # pointwise smallest admissible reaction
        delta = lambda x, y: np.maximum(0.0, -2.0 * G(x, y))

    L = lambda x, y: delta(x, y) + 0.5 * G(x, y)
    Mfun = lambda x, y: delta(x, y) + G(x, y)

    # cell statistics over quadrature points plus corners
    spts = _sample_points(mesh, k, nq)
    X, Y = spts[:, :, 0], spts[:, :, 1]
    wv = omega(X, Y)
    gwx, gwy = grad_omega(X, Y)
    gw = np.hypot(gwx, gwy)
    Lv = L(X, Y)
    w_max = wv.max(axis=1)
    w_min = wv.min(axis=1)
    gw_max = gw.max(axis=1)
    L_min = Lv.min(axis=1)
    L_zero = bool(np.abs(Lv).max() <= 1e-13 * max(1.0, np.abs(wv).max()))

    unit = (np.abs(w_max - 1.0) <= 1e-12) & (np.abs(w_min - 1.0) <= 1e-12)
    transport = eps == 0.0
    inv_sqrt_eps = np.inf if transport else 1.0 / np.sqrt(eps)
    hK = mesh.diam
    with np.errstate(divide="ignore", invalid="ignore"):
        branch_L = np.where(L_min > 0, gw_max / np.sqrt(np.where(L_min > 0, L_min, 1.0)), 0.0)
    if transport:
        # eps-scaled weights degenerate without diffusion; fall back to the
        # mesh-size scalings so residual indicators stay finite.
        S = np.zeros_like(w_max)
        lam = hK.copy()
        gamma = np.zeros_like(w_max)
    else:
        S = np.where(unit, inv_sqrt_eps, np.maximum(branch_L, w_max * inv_sqrt_eps))
        lam_b2 = hK * S / np.sqrt(w_min)
        with np.errstate(divide="ignore"):
            lam_b1 = np.where(L_min > 0, np.sqrt(w_max / np.where(L_min > 0, L_min, 1.0)), np.inf)
        lam = np.minimum(lam_b1, lam_b2)
        gamma = S ** 2 / w_min

    # face quantities (patch = adjacent cells; the vertex patches of the
    # analysis are approximated by these face patches)
    faces = mesh.faces
    nfc = len(faces)
    beta_F = np.empty(nfc)
    gamma_F = np.empty(nfc)
    w_max_F = np.empty(nfc)
    face_sup_w = np.empty(nfc)
    face_sup_geta = np.empty(nfc)
    lam2_max_F = np.empty(nfc)
    L_min_F = np.empty(nfc)
    face_sup_b = np.empty(nfc)
    sup_wL_F = np.empty(nfc)
    sup_bfit_F = np.empty(nfc)
    coeff_S4_F = np.empty(nfc)
    pe_L = np.empty(nfc)

    t1, _ = face_rule(k, nq)
    tpts = np.concatenate([[0.0], t1, [1.0]])
    for fi, face in enumerate(faces):
        patch = [face.minus] + ([face.plus] if face.interior else [])
        if transport:
            beta_F[fi] = face.h
        else:
            beta_F[fi] = min(hK[c] / w_min[c] * S[c] ** 2 for c in patch)
        gamma_F[fi] = max(gamma[c] for c in patch)
        w_max_F[fi] = max(w_max[c] for c in patch)
        lam2_max_F[fi] = max(lam[c] ** 2 for c in patch)
        L_min_F[fi] = min(L_min[c] for c in patch)
        tan = face.span[0] + (face.span[1] - face.span[0]) * tpts
        if face.axis == 0:
            xf, yf = np.full_like(tan, face.coord), tan
        else:
            xf, yf = tan, np.full_like(tan, face.coord)
        wf = omega(xf, yf)
        gex, gey = grad_eta(xf, yf)
        face_sup_w[fi] = wf.max()
        face_sup_geta[fi] = np.hypot(gex, gey).max()
        # patch sups of sqrt(omega)*L, |b - alpha eps grad eta|, omega/L
        pvals_wL = []
        pvals_b = []
        pvals_oL = []
        for c in patch:
            xs, ys = spts[c, :, 0], spts[c, :, 1]
            wv_c = omega(xs, ys)
            L_c = L(xs, ys)
            bx, by = conv.eval(xs, ys)
            gx, gy = grad_eta(xs, ys)
            pvals_wL.append(np.abs(np.sqrt(wv_c) * L_c).max())
            pvals_b.append(np.hypot(bx - alpha * eps * gx, by - alpha * eps * gy).max())
            if np.all(L_c > 0):
                pvals_oL.append((wv_c / L_c).max())
            else:
                pvals_oL.append(np.inf)
        sup_wL_F[fi] = max(pvals_wL)
        sup_bfit_F[fi] = max(pvals_b)
        if transport:
            coeff_S4_F[fi] = w_max_F[fi]
        else:
            coeff_S4_F[fi] = min(max(pvals_oL), w_max_F[fi] / eps)
        bxf, byf = conv.eval(xf, yf)
        face_sup_b[fi] = np.hypot(bxf, byf).max()
        if transport:
            pe_L[fi] = np.inf
        else:
            pe_L[fi] = face.h * np.hypot(bxf - alpha * eps * gex, byf - alpha * eps * gey).max() * inv_sqrt_eps

    return FittingData(mesh=mesh, k=k, eps=eps, alpha=alpha,
                       omega=omega, grad_omega=grad_omega, grad_eta=grad_eta,
                       G=G, L=L, M=Mfun, delta=delta, L_zero=L_zero,
                       w_max=w_max, w_min=w_min, gw_max=gw_max, L_min=L_min,
                       S=S, lam=lam, gamma=gamma,
                       beta_F=beta_F, gamma_F=gamma_F, w_max_F=w_max_F,
                       face_sup_w=face_sup_w, face_sup_geta=face_sup_geta,
                       lam2_max_F=lam2_max_F, L_min_F=L_min_F,
                       face_sup_b=face_sup_b, sup_wL_F=sup_wL_F,
                       sup_bfit_F=sup_bfit_F, coeff_S4_F=coeff_S4_F, pe_L=pe_L)


def gronwall_exponent(densities, dts):
    """Accumulated exponent: sum_n dt_n * phi_n with phi_n the per-step
    spatial max of delta^2/(2L) (see FittingData.gronwall_density)."""
    return float(np.dot(np.asarray(densities, dtype=float), np.asarray(dts, dtype=float)))
