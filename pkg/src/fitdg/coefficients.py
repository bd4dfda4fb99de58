"""Problem coefficients: convection fields, reaction policies, problem data."""

import numpy as np
from dataclasses import dataclass, field


class Convection:
    """A convection field b with optional analytic Helmholtz-potential split.

    b(x, y) -> (bx, by); div_b(x, y) -> scalar (defaults to 0).  When the
    potential eta with b = grad(eta) + curl part is known in closed form,
    pass eta, grad_eta (-> (dx, dy)) and lap_eta; fitting quantities then
    use the analytic potential instead of a discrete Poisson solve.
    """

    time_dependent = False

    def __init__(self, b, div_b=None, eta=None, grad_eta=None, lap_eta=None):
        self._b = b
        self._div = div_b
        self.eta = eta
        self.grad_eta = grad_eta
        self.lap_eta = lap_eta

    @property
    def has_analytic_potential(self):
        return self.grad_eta is not None

    def eval(self, x, y):
        bx, by = self._b(x, y)
        return np.broadcast_to(np.asarray(bx, dtype=float), np.shape(x)).copy(), \
            np.broadcast_to(np.asarray(by, dtype=float), np.shape(x)).copy()

    def div(self, x, y):
        if self._div is None:
            return np.zeros(np.shape(x))
        return np.broadcast_to(np.asarray(self._div(x, y), dtype=float), np.shape(x)).copy()


class DiscreteConvection(Convection):
    """Convection given by a discrete vector field (e.g. a Stokes velocity).

    vx, vy are DgField (or CG-derived DgField) components on some mesh;
    evaluation at arbitrary points goes through quadtree point location.
    """

    def __init__(self, vx, vy):
        self.vx = vx
        self.vy = vy
        self.mesh = vx.mesh
        self.k = vx.k
        self.eta = self.grad_eta = self.lap_eta = None

    @property
    def has_analytic_potential(self):
        return False

    def _ref(self, x, y):
        shape = np.shape(x)
        xf = np.asarray(x, dtype=float).ravel()
        yf = np.asarray(y, dtype=float).ravel()
        cells = self.mesh.locate(xf, yf)
        xr = (xf - self.mesh.x0[cells]) / self.mesh.hx[cells]
        yr = (yf - self.mesh.y0[cells]) / self.mesh.hy[cells]
        return shape, cells, xr, yr

    def eval(self, x, y):
        from .reference import element
        shape, cells, xr, yr = self._ref(x, y)
        phi = element(self.k).eval(np.column_stack([xr, yr]))
        bx = np.einsum("pa,pa->p", self.vx.coeffs[cells], phi)
        by = np.einsum("pa,pa->p", self.vy.coeffs[cells], phi)
        return bx.reshape(shape), by.reshape(shape)

    def div(self, x, y):
        from .reference import element
        shape, cells, xr, yr = self._ref(x, y)
        el = element(self.k)
        pts = np.column_stack([xr, yr])
        gx = el.eval(pts, dx=1)
        gy = el.eval(pts, dy=1)
        d = np.einsum("pa,pa->p", self.vx.coeffs[cells], gx) / self.mesh.hx[cells] \
            + np.einsum("pa,pa->p", self.vy.coeffs[cells], gy) / self.mesh.hy[cells]
        return d.reshape(shape)


@dataclass
class DeltaPolicy:
    """Artificial-reaction choice: 'zero', 'fixed' (constant) or 'auto'
    (pointwise smallest admissible value max{0, -2*G} with G the fitting
    expression entering L and M)."""

    kind: str = "zero"
    value: float = 0.0

    @classmethod
    def parse(cls, text):
        text = str(text).strip()
        if text in ("zero", "0"):
            return cls("zero")
        if text == "auto":
            return cls("auto")
        return cls("fixed", float(text))


def _zero(x, y):
    return np.zeros(np.shape(x))


@dataclass
class Problem:
    """Coefficient bundle for the convection-diffusion solver/estimator."""

    eps: float
    conv: Convection
    f: object = _zero                  # source term f(x, y)
    g_d: object = _zero                # Dirichlet data
    g_n: object = None                 # Neumann data (flux eps*du/dn)
    sigma: float = None                # interior-penalty parameter
    alpha: float = 1.0                 # fitting strength in w = exp(-alpha*eta)
    delta: DeltaPolicy = field(default_factory=DeltaPolicy)
    potential_sign: float = 1.0        # +1: discrete potential eq. as printed

    def sigma_for(self, k):
        return 10.0 * k * k if self.sigma is None else self.sigma
