"""Reference-element machinery: 1D rules and tensor-product Lagrange bases.

Everything lives on the unit reference cell [0,1]^2.  Interpolation nodes
are Gauss-Lobatto points, quadrature is Gauss-Legendre.  Local node and
quadrature orderings are row-major: index n = iy*(k+1) + ix.
"""

import numpy as np
from functools import lru_cache
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gauss_rule(n):
    """n-point Gauss-Legendre rule on [0,1]; exact for degree 2n-1."""
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def lobatto_nodes(k):
    """The k+1 Gauss-Lobatto points on [0,1] (degree-k interpolation nodes)."""
    if k < 1:
        raise ValueError("polynomial degree must be >= 1")
    if k == 1:
        return np.array([0.0, 1.0])
    # interior Lobatto points are the roots of P_k'
    c = np.zeros(k + 1)
    c[k] = 1.0
    interior = np.sort(legendre.legroots(legendre.legder(c)))
    return np.concatenate(([0.0], 0.5 * (interior + 1.0), [1.0]))


class Lagrange1D:
    """Lagrange basis on a given 1D node set, with derivatives."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        self.k = self.nodes.size - 1
        self._coef = []
        for j in range(self.nodes.size):
            r = np.delete(self.nodes, j)
            c = np.poly(r) / np.prod(self.nodes[j] - r)
            self._coef.append(c)

    def eval(self, x, deriv=0):
        """Values (or deriv-th derivatives) of all basis functions at x.

        Returns an array of shape x.shape + (k+1,).
        """
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.k + 1,))
        for j, c in enumerate(self._coef):
            cj = np.polyder(c, deriv) if deriv else c
            out[..., j] = np.polyval(cj, x)
        return out


@lru_cache(maxsize=None)
def lagrange1d(k):
    return Lagrange1D(tuple(lobatto_nodes(k)))


class TensorElement:
    """Tensor-product Q^k Lagrange element on [0,1]^2."""

    def __init__(self, k):
        self.k = k
        self.nb1 = k + 1
        self.nb = (k + 1) ** 2
        self.basis1d = lagrange1d(k)
        n1 = self.basis1d.nodes
        xx, yy = np.meshgrid(n1, n1)  # row-major: y outer, x inner
        self.nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def eval(self, pts, dx=0, dy=0):
        """Basis (derivative) values at arbitrary reference points.

        pts : (n, 2) array.  Returns (n, nb).
        """
        pts = np.asarray(pts, dtype=float)
        vx = self.basis1d.eval(pts[:, 0], deriv=dx)
        vy = self.basis1d.eval(pts[:, 1], deriv=dy)
        return (vy[:, :, None] * vx[:, None, :]).reshape(pts.shape[0], self.nb)

    def eval_grad(self, pts):
        """Reference gradients at points; returns (n, nb, 2)."""
        return np.stack([self.eval(pts, dx=1), self.eval(pts, dy=1)], axis=-1)


@lru_cache(maxsize=None)
def element(k):
    return TensorElement(k)


@lru_cache(maxsize=None)
def cell_rule(k, nq=None):
    """Tensor quadrature on the reference cell; default nq = k+2 per direction.

    Returns (pts, wts): pts is (nq*nq, 2), wts is (nq*nq,); the rule is exact
    for bivariate polynomials of degree 2*nq-1 in each variable.
    """
    if nq is None:
        nq = k + 2
    x, w = gauss_rule(nq)
    xx, yy = np.meshgrid(x, x)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    wts = np.outer(w, w).ravel()
    return pts, wts


@lru_cache(maxsize=None)
def cell_tabulation(k, nq=None):
    """Basis values/gradients/second derivatives at the cell rule points."""
    el = element(k)
    pts, wts = cell_rule(k, nq)
    phi = el.eval(pts)
    grad = el.eval_grad(pts)
    dxx = el.eval(pts, dx=2)
    dyy = el.eval(pts, dy=2)
    return pts, wts, phi, grad, dxx, dyy


@lru_cache(maxsize=None)
def reference_mass(k, nq=None):
    """Mass matrix on the unit reference cell."""
    _, wts, phi, _, _, _ = cell_tabulation(k, nq)
    return phi.T @ (wts[:, None] * phi)


@lru_cache(maxsize=None)
def face_rule(k, nq=None):
    """1D Gauss rule used on (sub)faces; default nq = k+2 points."""
    if nq is None:
        nq = k + 2
    return gauss_rule(nq)


def side_points(side, t):
    """Map 1D parameters t in [0,1] onto reference-cell side.

    Sides: 0 = x=0, 1 = x=1, 2 = y=0, 3 = y=1.  The parameter runs in the
    coordinate direction of the face (y for vertical sides, x for horizontal).
    """
    t = np.asarray(t, dtype=float)
    z = np.zeros_like(t)
    o = np.ones_like(t)
    if side == 0:
        return np.column_stack([z, t])
    if side == 1:
        return np.column_stack([o, t])
    if side == 2:
        return np.column_stack([t, z])
    if side == 3:
        return np.column_stack([t, o])
    raise ValueError(side)
