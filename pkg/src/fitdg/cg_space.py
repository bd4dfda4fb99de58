"""Continuous Q^k spaces on quadtree meshes with hanging-node constraints.

Global nodes are the geometrically distinct Gauss-Lobatto points; a node
sitting on the interior of a coarser neighbor's face is a slave whose value
is the coarse side's trace polynomial evaluated there.  Constraint chains
(a master that is itself a slave across another face) are resolved by
substitution, which terminates on 2:1-balanced meshes.
"""

import numpy as np
import scipy.sparse as sp

from .fem_core import DgField, _cache
from .reference import element, lagrange1d


def _node_key(x, y):
    return (round(float(x), 9), round(float(y), 9))


class CgSpace:
    """Continuous Lagrange Q^k space; holds node table and constraints.

    dirichlet_sides: iterable of sides (0..3) carrying essential conditions.
    """

    def __init__(self, mesh, k, dirichlet_sides=()):
        self.mesh = mesh
        self.k = k
        self.nb = (k + 1) ** 2
        self.dirichlet_sides = frozenset(dirichlet_sides)
        self._build()

    def _build(self):
        mesh, k = self.mesh, self.k
        el = element(k)
        key2gid = {}
        coords = []
        gids = np.empty((mesh.n_cells, self.nb), dtype=np.int64)
        for n in range(mesh.n_cells):
            xy = mesh.map_to_physical(n, el.nodes)
            for a in range(self.nb):
                key = _node_key(xy[a, 0], xy[a, 1])
                g = key2gid.get(key)
                if g is None:
                    g = key2gid[key] = len(coords)
                    coords.append(key)
            gids[n] = [key2gid[_node_key(*p)] for p in xy]
        self.gids = gids
        self.coords = np.array(coords)
        self.n_nodes = len(coords)

        # raw hanging constraints from coarse/fine interior faces
        lag = lagrange1d(k)
        nodes1 = lag.nodes
        raw = {}
        for face in mesh.faces:
            if not face.interior:
                continue
            cm, cp = face.minus, face.plus
            if mesh.level[cm] == mesh.level[cp]:
                continue
            fine, coarse = (cm, cp) if mesh.level[cm] > mesh.level[cp] else (cp, cm)
            tan = 1 - face.axis
            lo_c = mesh.y0[coarse] if tan == 1 else mesh.x0[coarse]
            h_c = mesh.hy[coarse] if tan == 1 else mesh.hx[coarse]
            fine_side = self._side_locals(fine, face)
            coarse_side = self._side_locals(coarse, face)
            xy_f = mesh.map_to_physical(fine, el.nodes[fine_side])
            masters = self.gids[coarse, coarse_side]
            t = (xy_f[:, tan] - lo_c) / h_c
            W = lag.eval(t)
            for r, g in enumerate(self.gids[fine, fine_side]):
                if np.any(np.abs(t[r] - nodes1) < 1e-9):
                    continue  # coincides with a coarse node: same gid already
                raw[g] = list(zip(masters.tolist(), W[r].tolist()))

        # resolve chains: masters that are slaves get substituted
        resolved = {}
        def resolve(g, depth=0):
            if g in resolved:
                return resolved[g]
            if g not in raw:
                return None
            if depth > 8:
                raise RuntimeError("hanging-node constraint chain too deep")
            comb = {}
            for m, w in raw[g]:
                sub = resolve(m, depth + 1)
                if sub is None:
                    comb[m] = comb.get(m, 0.0) + w
                else:
                    for mm, ww in sub:
                        comb[mm] = comb.get(mm, 0.0) + w * ww
            resolved[g] = sorted(comb.items())
            return resolved[g]
        for g in raw:
            resolve(g)
        self.constraints = resolved

        # essential boundary nodes
        x0, y0, x1, y1 = mesh.domain
        tolx = 1e-9 * max(1.0, abs(x1 - x0))
        on = {0: np.abs(self.coords[:, 0] - x0) < tolx,
              1: np.abs(self.coords[:, 0] - x1) < tolx,
              2: np.abs(self.coords[:, 1] - y0) < tolx,
              3: np.abs(self.coords[:, 1] - y1) < tolx}
        self.boundary_nodes = on
        dirichlet = np.zeros(self.n_nodes, dtype=bool)
        for s in self.dirichlet_sides:
            dirichlet |= on[s]
        self.dirichlet_mask = dirichlet

        slave = np.zeros(self.n_nodes, dtype=bool)
        slave[list(resolved)] = True
        self.free = np.flatnonzero(~slave & ~dirichlet)
        self.n_free = self.free.size

        # expansion matrix: full node vector = C @ free (+ dirichlet data)
        col_of = -np.ones(self.n_nodes, dtype=np.int64)
        col_of[self.free] = np.arange(self.n_free)
        rows, cols, vals = [], [], []
        for g in self.free:
            rows.append(g); cols.append(col_of[g]); vals.append(1.0)
        for g, masters in resolved.items():
            for m, w in masters:
                if col_of[m] >= 0:
                    rows.append(g); cols.append(col_of[m]); vals.append(w)
        self.C = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_free))
        self._col_of = col_of

    def _side_locals(self, n, face):
        """Local node indices of cell n lying on the given face's side."""
        k = self.k
        mesh = self.mesh
        idx = np.arange(self.nb)
        ix, iy = idx % (k + 1), idx // (k + 1)
        if face.axis == 0:
            onmin = abs(face.coord - mesh.x0[n]) < 1e-12 * (1 + abs(face.coord))
            return idx[(ix == 0) if onmin else (ix == k)]
        onmin = abs(face.coord - mesh.y0[n]) < 1e-12 * (1 + abs(face.coord))
        return idx[(iy == 0) if onmin else (iy == k)]

    def field(self, node_values):
        """DgField view of nodal values (per-cell coefficient gather)."""
        return DgField(self.mesh, self.k, node_values[self.gids])

    def interpolate_nodes(self, fn):
        """fn(x, y) evaluated at all global nodes."""
        return np.asarray(fn(self.coords[:, 0], self.coords[:, 1]), dtype=float)

    def reduce(self, A, b, dirichlet_values=None):
        """Constrain an unreduced node-indexed system; returns (A_r, b_r, g0)."""
        g0 = np.zeros(self.n_nodes)
        if dirichlet_values is not None:
            g0[self.dirichlet_mask] = dirichlet_values[self.dirichlet_mask]
            for g, masters in self.constraints.items():
                if self.dirichlet_mask[g]:
                    continue
                g0[g] = sum(w * g0[m] for m, w in masters if self.dirichlet_mask[m])
        A_r = self.C.T @ A @ self.C
        b_r = self.C.T @ (b - A @ g0)
        return A_r.tocsc(), b_r, g0

    def expand(self, x_free, g0=None):
        full = self.C @ x_free
        return full + g0 if g0 is not None else full


def cg_space(mesh, k, dirichlet_sides=()):
    return _cache(mesh, ("cg", k, frozenset(dirichlet_sides)),
                  lambda: CgSpace(mesh, k, dirichlet_sides))


def assemble_poisson(space, rhs_fn=None, nq=None):
    """Stiffness matrix and load vector on the unreduced node set."""
    from .fem_core import cell_quad_points, cell_quad_weights
    from .reference import cell_tabulation
    mesh, k = space.mesh, space.k
    _, wts, phi, grad, _, _ = cell_tabulation(k, nq)
    pts = cell_quad_points(mesh, k, nq)
    wq = cell_quad_weights(mesh, k, nq)
    rows, cols, vals = [], [], []
    b = np.zeros(space.n_nodes)
    gx = grad[:, :, 0]
    gy = grad[:, :, 1]
    for n in range(mesh.n_cells):
        sx, sy = 1.0 / mesh.hx[n], 1.0 / mesh.hy[n]
        w = wq[n]
        K = (gx * sx).T @ (w[:, None] * gx * sx) + (gy * sy).T @ (w[:, None] * gy * sy)
        g = space.gids[n]
        rows.append(np.repeat(g, space.nb))
        cols.append(np.tile(g, space.nb))
        vals.append(K.ravel())
        if rhs_fn is not None:
            fvals = rhs_fn(pts[n, :, 0], pts[n, :, 1])
            np.add.at(b, g, phi.T @ (w * fvals))
    A = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.n_nodes, space.n_nodes))
    return A, b
