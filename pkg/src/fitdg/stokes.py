"""Taylor-Hood (Q2/Q1) Stokes solver on quadtree meshes.

Weak form: find (v, p) with

    (2 mu eps(v), eps(phi)) - (div phi, p) = (f, phi)
    -(div v, q)                            = 0

plus a scalar Lagrange multiplier pinning the pressure mean to zero.
Boundary conditions are either free-slip (v.n = 0 per component on the
axis-aligned boundary, natural zero tangential traction) or no-slip
(v = 0 everywhere); both are homogeneous essential constraints.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import cg_space as cg
from .fem_core import cell_quad_points, cell_quad_weights, _cache
from .reference import element, cell_rule


def _tabulations(mesh, nq):
    """(ref pts, per-cell physical wts, Q2 value/grad, Q1 value/grad)."""
    def build():
        pts, wts = cell_rule(2, nq)
        e2, e1 = element(2), element(1)
        tab = {
            "pts": pts, "wts": wts,
            "phi2": e2.eval(pts), "gx2": e2.eval(pts, dx=1), "gy2": e2.eval(pts, dy=1),
            "phi1": e1.eval(pts), "gx1": e1.eval(pts, dx=1), "gy1": e1.eval(pts, dy=1),
        }
        x = mesh.x0[:, None] + pts[None, :, 0] * mesh.hx[:, None]
        y = mesh.y0[:, None] + pts[None, :, 1] * mesh.hy[:, None]
        tab["x"], tab["y"] = x, y
        tab["wq"] = mesh.areas[:, None] * wts[None, :]
        return tab
    return _cache(mesh, ("stokes_tab", nq), build)


def _coo(space_t, space_u, loc):
    """Scatter batched local matrices (n_cells, nb_t, nb_u) to node space."""
    nt, nu = space_t.nb, space_u.nb
    rows = np.repeat(space_t.gids, nu, axis=1).ravel()
    cols = np.tile(space_u.gids, (1, nt)).ravel()
    return sp.csr_matrix((loc.ravel(), (rows, cols)),
                         shape=(space_t.n_nodes, space_u.n_nodes))


class StokesSolver:
    """Q2/Q1 Taylor-Hood discretisation with a direct sparse solve.

    mu is a constant or a callable mu(x, y); bc is "free_slip" or
    "no_slip".  The assembled (reduced, symmetric) saddle matrix is kept
    on the instance for inspection.
    """

    def __init__(self, mesh, mu=1.0, bc="free_slip", nq=4):
        self.mesh = mesh
        self.mu = mu
        self.nq = nq
        if bc == "free_slip":
            dsx, dsy = (0, 1), (2, 3)
        elif bc == "no_slip":
            dsx = dsy = (0, 1, 2, 3)
        else:
            raise ValueError(f"unknown Stokes bc: {bc}")
        self.Vx = cg.cg_space(mesh, 2, dsx)
        self.Vy = cg.cg_space(mesh, 2, dsy)
        self.Q = cg.cg_space(mesh, 1)
        self._assemble()

    def _assemble(self):
        mesh, nq = self.mesh, self.nq
        tab = _tabulations(mesh, nq)
        wq = tab["wq"]
        mu = self.mu
        muv = mu(tab["x"], tab["y"]) if callable(mu) else float(mu)
        w = wq * muv                       # viscous weight per (cell, qp)
        sx, sy = 1.0 / mesh.hx, 1.0 / mesh.hy
        gx2, gy2, phi1 = tab["gx2"], tab["gy2"], tab["phi1"]

        def blk(w_, Dt, st, Du, su):
            loc = np.einsum("nq,qi,qj->nij", w_, Dt, Du)
            return loc * (st * su)[:, None, None]

        one = np.ones(mesh.n_cells)
        # 2 mu eps(v):eps(phi) component blocks
        Axx = _coo(self.Vx, self.Vx,
                   2.0 * blk(w, gx2, sx, gx2, sx) + blk(w, gy2, sy, gy2, sy))
        Ayy = _coo(self.Vy, self.Vy,
                   2.0 * blk(w, gy2, sy, gy2, sy) + blk(w, gx2, sx, gx2, sx))
        Axy = _coo(self.Vx, self.Vy, blk(w, gy2, sy, gx2, sx))
        # -(div phi, p)
        Bx = _coo(self.Vx, self.Q, -blk(wq, gx2, sx, phi1, one))
        By = _coo(self.Vy, self.Q, -blk(wq, gy2, sy, phi1, one))

        Cx, Cy, Cq = self.Vx.C, self.Vy.C, self.Q.C
        Axx_r = Cx.T @ Axx @ Cx
        Ayy_r = Cy.T @ Ayy @ Cy
        Axy_r = Cx.T @ Axy @ Cy
        Bx_r = Cx.T @ Bx @ Cq
        By_r = Cy.T @ By @ Cq

        # pressure mean multiplier: m_a = int psi_a
        m_full = np.zeros(self.Q.n_nodes)
        np.add.at(m_full, self.Q.gids.ravel(), (wq @ phi1).ravel())
        m_r = sp.csr_matrix((Cq.T @ m_full)[:, None])

        self.matrix = sp.bmat(
            [[Axx_r, Axy_r, Bx_r, None],
             [Axy_r.T, Ayy_r, By_r, None],
             [Bx_r.T, By_r.T, None, m_r],
             [None, None, m_r.T, None]], format="csc")
        self._nx, self._ny, self._np = Cx.shape[1], Cy.shape[1], Cq.shape[1]
        self._lu = spla.splu(self.matrix)

    def solve(self, body_force):
        """body_force(x, y) -> (fx, fy); returns (vx, vy, p) as DgFields."""
        mesh = self.mesh
        tab = _tabulations(mesh, self.nq)
        fx, fy = body_force(tab["x"], tab["y"])
        fx = np.broadcast_to(np.asarray(fx, dtype=float), tab["wq"].shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=float), tab["wq"].shape)
        Fx = np.zeros(self.Vx.n_nodes)
        Fy = np.zeros(self.Vy.n_nodes)
        np.add.at(Fx, self.Vx.gids.ravel(), ((tab["wq"] * fx) @ tab["phi2"]).ravel())
        np.add.at(Fy, self.Vy.gids.ravel(), ((tab["wq"] * fy) @ tab["phi2"]).ravel())
        rhs = np.concatenate([self.Vx.C.T @ Fx, self.Vy.C.T @ Fy,
                              np.zeros(self._np + 1)])
        sol = self._lu.solve(rhs)
        ax, ay, ap = self._nx, self._nx + self._ny, self._nx + self._ny + self._np
        vx = self.Vx.field(self.Vx.expand(sol[:ax]))
        vy = self.Vy.field(self.Vy.expand(sol[ax:ay]))
        p = self.Q.field(self.Q.expand(sol[ay:ap]))
        self.multiplier = float(sol[-1])
        return vx, vy, p


def pressure_mean(p):
    """Domain integral of a pressure field divided by the area."""
    wq = cell_quad_weights(p.mesh, p.k)
    x0, y0, x1, y1 = p.mesh.domain
    return float(np.sum(wq * p.values())) / ((x1 - x0) * (y1 - y0))


def manufactured_stokes(mu=1.0):
    """Free-slip-compatible exact pair on the unit square.

    v = (sin(pi x) cos(pi y), -cos(pi x) sin(pi y)) (divergence-free,
    diagonal strain), p = cos(pi x) cos(pi y) (zero mean), and the body
    force f = -div(2 mu eps(v)) + grad p = 2 mu pi^2 v + grad p.
    """
    pi = np.pi

    def vel(x, y):
        return np.sin(pi * x) * np.cos(pi * y), -np.cos(pi * x) * np.sin(pi * y)

    def pres(x, y):
        return np.cos(pi * x) * np.cos(pi * y)

    def force(x, y):
        vx, vy = vel(x, y)
        return (2.0 * mu * pi * pi * vx - pi * np.sin(pi * x) * np.cos(pi * y),
                2.0 * mu * pi * pi * vy - pi * np.cos(pi * x) * np.sin(pi * y))

    return vel, pres, force
