"""Discontinuous Q^k fields on quadtree meshes: evaluation, projection,
mesh transfer and the exponentially weighted dG norm.

A DgField stores one coefficient vector per cell in the Lagrange basis at
tensor Gauss-Lobatto nodes.  All cell-wise operations are vectorised over
cells; face operations are vectorised over groups of geometrically
congruent (in reference coordinates) faces.
"""

import numpy as np

from . import mesh as meshmod
from .reference import (element, cell_rule, cell_tabulation, reference_mass,
                        face_rule, side_points)


def _cache(mesh, key, build):
    store = getattr(mesh, "_fem_cache", None)
    if store is None:
        store = mesh._fem_cache = {}
    if key not in store:
        store[key] = build()
    return store[key]


def cell_quad_points(mesh, k, nq=None):
    """Physical quadrature points per cell: (n_cells, nqp, 2)."""
    def build():
        pts, _, _, _, _, _ = cell_tabulation(k, nq)
        x = mesh.x0[:, None] + pts[None, :, 0] * mesh.hx[:, None]
        y = mesh.y0[:, None] + pts[None, :, 1] * mesh.hy[:, None]
        return np.stack([x, y], axis=-1)
    return _cache(mesh, ("qpts", k, nq), build)


def cell_quad_weights(mesh, k, nq=None):
    """Physical quadrature weights per cell: (n_cells, nqp)."""
    def build():
        _, wts, _, _, _, _ = cell_tabulation(k, nq)
        return mesh.areas[:, None] * wts[None, :]
    return _cache(mesh, ("qwts", k, nq), build)


class DgField:
    """Element-wise polynomial field of degree k (no continuity)."""

    def __init__(self, mesh, k, coeffs=None):
        self.mesh = mesh
        self.k = k
        self.nb = (k + 1) ** 2
        if coeffs is None:
            coeffs = np.zeros((mesh.n_cells, self.nb))
        self.coeffs = np.asarray(coeffs, dtype=float)

    def copy(self):
        return DgField(self.mesh, self.k, self.coeffs.copy())

    def values(self, nq=None):
        """Values at the cell quadrature points: (n_cells, nqp)."""
        _, _, phi, _, _, _ = cell_tabulation(self.k, nq)
        return self.coeffs @ phi.T

    def gradients(self, nq=None):
        """Physical gradients at cell quadrature points: (n_cells, nqp, 2)."""
        _, _, _, grad, _, _ = cell_tabulation(self.k, nq)
        gx = (self.coeffs @ grad[:, :, 0].T) / self.mesh.hx[:, None]
        gy = (self.coeffs @ grad[:, :, 1].T) / self.mesh.hy[:, None]
        return np.stack([gx, gy], axis=-1)

    def laplacians(self, nq=None):
        """Laplacian at cell quadrature points: (n_cells, nqp)."""
        _, _, _, _, dxx, dyy = cell_tabulation(self.k, nq)
        return (self.coeffs @ dxx.T) / self.mesh.hx[:, None] ** 2 \
            + (self.coeffs @ dyy.T) / self.mesh.hy[:, None] ** 2

    def eval_cellwise(self, ref_pts):
        """Values at the same reference points in every cell: (n_cells, m)."""
        phi = element(self.k).eval(np.asarray(ref_pts, dtype=float))
        return self.coeffs @ phi.T

    def __add__(self, other):
        _check_same(self, other)
        return DgField(self.mesh, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return DgField(self.mesh, self.k, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return DgField(self.mesh, self.k, self.coeffs * a)

    __rmul__ = __mul__


def _check_same(a, b):
    if a.mesh is not b.mesh or a.k != b.k:
        raise ValueError("fields live on different spaces")


def interpolate(fn, mesh, k):
    """Nodal interpolation of a callable fn(x, y) into the DG space."""
    el = element(k)
    x = mesh.x0[:, None] + el.nodes[None, :, 0] * mesh.hx[:, None]
    y = mesh.y0[:, None] + el.nodes[None, :, 1] * mesh.hy[:, None]
    return DgField(mesh, k, np.asarray(fn(x, y), dtype=float))


def l2_project(fn, mesh, k, nq=None):
    """Cell-wise L2 projection of a callable onto the degree-k DG space.

    The projection is computed with the cell quadrature rule (default k+2
    Gauss points per direction, exact for integrands of degree <= 2k+3).
    """
    pts = cell_quad_points(mesh, k, nq)
    _, wts, phi, _, _, _ = cell_tabulation(k, nq)
    vals = np.asarray(fn(pts[:, :, 0], pts[:, :, 1]), dtype=float)
    rhs = (vals * wts[None, :]) @ phi  # area factor cancels against mass scaling
    coeffs = np.linalg.solve(reference_mass(k, nq), rhs.T).T
    return DgField(mesh, k, coeffs)


def project_values(vals, mesh, k, nq=None):
    """L2-project values given at the cell quadrature points (n_cells, nqp)."""
    _, wts, phi, _, _, _ = cell_tabulation(k, nq)
    rhs = (np.asarray(vals, dtype=float) * wts[None, :]) @ phi
    coeffs = np.linalg.solve(reference_mass(k, nq), rhs.T).T
    return DgField(mesh, k, coeffs)


def _sub_interval(child_key, anc_key):
    """Reference rectangle of child_key inside ancestor anc_key."""
    dl = child_key[0] - anc_key[0]
    scale = 0.5 ** dl
    ox = (child_key[1] - (anc_key[1] << dl)) * scale
    oy = (child_key[2] - (anc_key[2] << dl)) * scale
    return ox, oy, scale


def _embed_matrix(k, ox, oy, scale):
    """Evaluation of an ancestor's polynomial at a child's nodes (nb x nb)."""
    el = element(k)
    pts = np.column_stack([ox + scale * el.nodes[:, 0], oy + scale * el.nodes[:, 1]])
    return el.eval(pts)


def transfer(field, target, tmap=None):
    """Transfer a DgField to another mesh of the same quadtree.

    Prolongation (target finer) is exact; coarsening is the cell-wise L2
    projection of the piecewise polynomial onto the coarser cell.
    """
    source = field.mesh
    if tmap is None:
        tmap = meshmod.build_transfer_map(source, target)
    k = field.k
    out = DgField(target, k)
    el = element(k)
    pts, wts = cell_rule(k)
    phi = el.eval(pts)
    mass = reference_mass(k)
    emb_cache = {}
    for t, entry in enumerate(tmap.entries):
        kind = entry[0]
        if kind == "copy":
            out.coeffs[t] = field.coeffs[entry[1]]
        elif kind == "refine":
            s = entry[1]
            key = (target.cells[t], source.cells[s])
            rel = _sub_interval(*key)
            E = emb_cache.get(("e", rel))
            if E is None:
                E = emb_cache[("e", rel)] = _embed_matrix(k, *rel)
            out.coeffs[t] = E @ field.coeffs[s]
        else:  # coarsen: L2 projection from the fine pieces
            rhs = np.zeros(field.nb)
            for s in entry[1]:
                rel = _sub_interval(source.cells[s], target.cells[t])
                ox, oy, sc = rel
                P = emb_cache.get(("p", rel))
                if P is None:
                    sub_pts = np.column_stack([ox + sc * pts[:, 0], oy + sc * pts[:, 1]])
                    # coarse basis at fine-cell quad points, fine-cell jacobian sc^2
                    P = emb_cache[("p", rel)] = (el.eval(sub_pts), sc * sc)
                phi_coarse, jac = P
                fine_vals = phi @ field.coeffs[s]
                rhs += jac * phi_coarse.T @ (wts * fine_vals)
            out.coeffs[t] = np.linalg.solve(mass, rhs)
    return out


class FaceGroup:
    """Faces sharing the same reference-trace pattern, for batched kernels.

    Tm, Tp: (nqf, nb) basis traces of the minus/plus cell on the face points;
    Gm, Gp: (nqf, nb, 2) reference-gradient traces (scale by 1/hx, 1/hy of
    the respective cell to get physical gradients).  For boundary groups the
    plus arrays are None.
    """

    def __init__(self, faces_idx, minus, plus, Tm, Tp, Gm, Gp, axis, sign, bc, h, pts):
        self.idx = np.asarray(faces_idx)
        self.minus = np.asarray(minus)
        self.plus = np.asarray(plus) if plus is not None else None
        self.Tm, self.Tp, self.Gm, self.Gp = Tm, Tp, Gm, Gp
        self.axis = axis
        self.sign = sign      # outward normal of minus cell along axis (+1/-1)
        self.bc = bc
        self.h = np.asarray(h)
        self.pts = pts        # (nf, nqf, 2) physical quadrature points

    @property
    def normal(self):
        n = np.zeros(2)
        n[self.axis] = self.sign
        return n


def _face_ref_key(mesh, n, face):
    """(side, ref_lo, ref_hi) of the face within cell n, rounded for caching."""
    if face.axis == 0:
        side = 0 if abs(face.coord - mesh.x0[n]) < 1e-12 * (1 + abs(face.coord)) else 1
        lo = (face.span[0] - mesh.y0[n]) / mesh.hy[n]
        hi = (face.span[1] - mesh.y0[n]) / mesh.hy[n]
    else:
        side = 2 if abs(face.coord - mesh.y0[n]) < 1e-12 * (1 + abs(face.coord)) else 3
        lo = (face.span[0] - mesh.x0[n]) / mesh.hx[n]
        hi = (face.span[1] - mesh.x0[n]) / mesh.hx[n]
    return side, round(lo * 4) / 4, round(hi * 4) / 4


def face_ops(mesh, k, nq=None):
    """Grouped face-trace tabulations for a mesh; cached on the mesh."""
    def build():
        t1, w1 = face_rule(k, nq)
        el = element(k)
        trace_cache = {}

        def traces(side, lo, hi):
            key = (side, lo, hi)
            if key not in trace_cache:
                pts = side_points(side, lo + (hi - lo) * t1)
                trace_cache[key] = (el.eval(pts), el.eval_grad(pts))
            return trace_cache[key]

        buckets = {}
        for fidx, face in enumerate(mesh.faces):
            if face.interior:
                km = _face_ref_key(mesh, face.minus, face)
                kp = _face_ref_key(mesh, face.plus, face)
                gkey = (face.axis, km, kp, "", 1)
            else:
                km = _face_ref_key(mesh, face.minus, face)
                gkey = (face.axis, km, None, face.bc, face.sign)
            buckets.setdefault(gkey, []).append(fidx)

        groups = []
        for gkey in sorted(buckets, key=lambda g: (g[0], str(g))):
            axis, km, kp, bc, sign = gkey
            fidxs = buckets[gkey]
            faces = [mesh.faces[i] for i in fidxs]
            minus = [f.minus for f in faces]
            plus = [f.plus for f in faces] if kp is not None else None
            Tm, Gm = traces(*km)
            Tp, Gp = traces(*kp) if kp is not None else (None, None)
            h = [f.h for f in faces]
            pts = np.empty((len(faces), t1.size, 2))
            for r, f in enumerate(faces):
                tan = f.span[0] + (f.span[1] - f.span[0]) * t1
                pts[r, :, f.axis] = f.coord
                pts[r, :, 1 - f.axis] = tan
            groups.append(FaceGroup(fidxs, minus, plus, Tm, Tp, Gm, Gp,
                                    axis, sign, bc, h, pts))
        return groups, w1
    return _cache(mesh, ("faceops", k, nq), build)


def face_jumps(field, nq=None):
    """Jump traces [u] = u_minus - u_plus per interior face group.

    Returns list of (group, jump_values (nf, nqf)); boundary groups yield
    the one-sided trace instead.
    """
    groups, _ = face_ops(field.mesh, field.k, nq)
    out = []
    for g in groups:
        vm = field.coeffs[g.minus] @ g.Tm.T
        if g.plus is None:
            out.append((g, vm))
        else:
            vp = field.coeffs[g.plus] @ g.Tp.T
            out.append((g, vm - vp))
    return out


def broken_norms(field, weight_fn=None, nq=None):
    """(grad_seminorm^2 per cell, l2^2 per cell) with optional weight(x,y)."""
    mesh = field.mesh
    wts = cell_quad_weights(mesh, field.k, nq)
    pts = cell_quad_points(mesh, field.k, nq)
    w = 1.0 if weight_fn is None else weight_fn(pts[:, :, 0], pts[:, :, 1])
    vals = field.values(nq)
    grads = field.gradients(nq)
    l2 = np.sum(wts * w * vals ** 2, axis=1)
    h1 = np.sum(wts * w * (grads[:, :, 0] ** 2 + grads[:, :, 1] ** 2), axis=1)
    return h1, l2


def weighted_dg_norm(field, eps, sigma, weight_fn=None, L_fn=None, nq=None):
    """Exponentially weighted dG norm.

    norm^2 = sum_K eps * |w^(1/2) grad v|_K^2 + sum_K |(w L)^(1/2) v|_K^2
           + sum_F (sigma * eps / h_F) |w^(1/2) [v]|_F^2

    weight_fn and L_fn are callables (x, y) -> values; omitting weight_fn
    means w == 1, omitting L_fn drops the reaction term (the L == 0 mode).
    """
    mesh = field.mesh
    wts = cell_quad_weights(mesh, field.k, nq)
    pts = cell_quad_points(mesh, field.k, nq)
    w = 1.0 if weight_fn is None else weight_fn(pts[:, :, 0], pts[:, :, 1])
    grads = field.gradients(nq)
    total = eps * np.sum(wts * w * (grads[:, :, 0] ** 2 + grads[:, :, 1] ** 2))
    if L_fn is not None:
        Lv = L_fn(pts[:, :, 0], pts[:, :, 1])
        total += np.sum(wts * w * Lv * field.values(nq) ** 2)
    groups, w1 = face_ops(mesh, field.k, nq)
    for g, jump in face_jumps(field, nq):
        if g.plus is None and g.bc != "dirichlet":
            continue
        wf = 1.0 if weight_fn is None else weight_fn(g.pts[:, :, 0], g.pts[:, :, 1])
        total += np.sum((sigma * eps / g.h)[:, None] * wf * jump ** 2 * w1[None, :] * g.h[:, None])
    return np.sqrt(total)
