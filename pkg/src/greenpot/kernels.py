"""Potential kernels: fundamental solution, analytical Green's functions
for half-plane / disk / rectangle, and a Green's kernel precomputed
numerically on an arbitrary fixed boundary.

Every backend exposes point values G(x, xi) and field-point directional
derivatives dG/dn_x. Values are symmetric in (x, xi) for the Green
variants and carry the -(1/2pi) ln|x - xi| singularity on the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._lapack import condition_estimate, lu_factor, lu_solve
from .geometry import GeometryError

TWO_PI = 2.0 * math.pi


class SingularPointError(ValueError):
    pass


class KernelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """alpha * u + beta * du/dn = rhs on a boundary piece."""

    alpha: float
    beta: float
    rhs: object = None

    def __post_init__(self):
        if self.alpha == 0.0 and self.beta == 0.0:
            raise ValueError("boundary condition with alpha = beta = 0")

    @property
    def kind(self):
        if self.beta == 0.0:
            return "dirichlet"
        if self.alpha == 0.0:
            return "neumann"
        return "robin"


def dirichlet(rhs=None):
    return BoundaryCondition(1.0, 0.0, rhs)


def neumann(rhs=None):
    return BoundaryCondition(0.0, 1.0, rhs)


def _pts(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return np.ascontiguousarray(x), False


class KernelBackend:
    """Common surface for all kernel variants."""

    name = "abstract"
    is_green = False
    eval_weight = 1.0  # relative cost of one evaluation, for cost models
    smooth_split = False  # True when the regular part is separately evaluable

    def value_matrix(self, x, xi):
        raise NotImplementedError

    def value_pairs(self, x, xi):
        raise NotImplementedError

    def grad_matrix(self, x, xi):
        raise NotImplementedError

    def grad_pairs(self, x, xi):
        raise NotImplementedError

    def normal_deriv_matrix(self, x, nx, xi):
        g = self.grad_matrix(x, xi)
        return g[..., 0] * nx[:, None, 0] + g[..., 1] * nx[:, None, 1]

    def value(self, x, xi):
        x, _ = _pts(x)
        xi, _ = _pts(xi)
        if np.allclose(x, xi, rtol=0.0, atol=0.0):
            raise SingularPointError("kernel evaluated at x = xi")
        return float(self.value_pairs(x, xi)[0])

    def normal_derivative(self, x, n, xi):
        x, _ = _pts(x)
        xi, _ = _pts(xi)
        if np.array_equal(x, xi):
            raise SingularPointError("kernel derivative evaluated at x = xi")
        g = self.grad_pairs(x, xi)[0]
        n = np.asarray(n, dtype=float)
        return float(g @ n)

    def regular_diag_normal_deriv(self, x, nx, step=1e-5):
        """dpsi/dn_x at coincident points, psi = G - fundamental.

        psi is smooth on the diagonal; a centered difference in the field
        point suffices. Overridden exactly for the numerical kernel.
        """
        if not self.is_green:
            return np.zeros(len(x))
        xp = x + step * nx
        xm = x - step * nx
        psi_p = self.value_pairs(xp, x) - _accel.log_potential_pairs(xp, x)
        psi_m = self.value_pairs(xm, x) - _accel.log_potential_pairs(xm, x)
        return (psi_p - psi_m) / (2.0 * step)

    def single_layer(self, x, nodes, weighted_mu):
        """sum_k G(x, nodes_k) * weighted_mu_k at each row of x."""
        return self.value_matrix(x, nodes) @ weighted_mu

    def single_layer_grad(self, x, nodes, weighted_mu):
        g = self.grad_matrix(x, nodes)
        return np.einsum("ijk,j->ik", g, weighted_mu)


class FundamentalKernel(KernelBackend):
    """Free-space kernel -(1/2pi) ln|x - xi|."""

    name = "fundamental"
    is_green = False
    eval_weight = 1.0

    def value_matrix(self, x, xi):
        return _accel.log_potential_matrix(np.ascontiguousarray(x), np.ascontiguousarray(xi))

    def value_pairs(self, x, xi):
        return _accel.log_potential_pairs(np.ascontiguousarray(x), np.ascontiguousarray(xi))

    def grad_matrix(self, x, xi):
        return _accel.log_potential_gradient(np.ascontiguousarray(x), np.ascontiguousarray(xi))

    def grad_pairs(self, x, xi):
        d = x - xi
        r2 = d[:, 0] ** 2 + d[:, 1] ** 2
        return -d / (TWO_PI * r2[:, None])


class HalfPlaneKernel(KernelBackend):
    """Dirichlet Green's function of the upper half-plane x2 >= 0."""

    name = "halfplane"
    is_green = True
    eval_weight = 2.0

    def _check(self, x):
        if np.any(x[:, 1] < -1e-12):
            raise KernelDomainError("point below the half-plane boundary x2 = 0")

    def value_matrix(self, x, xi):
        self._check(x)
        self._check(xi)
        dx = x[:, None, 0] - xi[None, :, 0]
        sp = x[:, None, 1] + xi[None, :, 1]
        sm = x[:, None, 1] - xi[None, :, 1]
        return (np.log(dx**2 + sp**2) - np.log(dx**2 + sm**2)) / (2.0 * TWO_PI)

    def value_pairs(self, x, xi):
        self._check(x)
        self._check(xi)
        dx = x[:, 0] - xi[:, 0]
        sp = x[:, 1] + xi[:, 1]
        sm = x[:, 1] - xi[:, 1]
        return (np.log(dx**2 + sp**2) - np.log(dx**2 + sm**2)) / (2.0 * TWO_PI)

    def grad_matrix(self, x, xi):
        dx = x[:, None, 0] - xi[None, :, 0]
        sp = x[:, None, 1] + xi[None, :, 1]
        sm = x[:, None, 1] - xi[None, :, 1]
        ap = dx**2 + sp**2
        am = dx**2 + sm**2
        gx = dx / ap - dx / am
        gy = sp / ap - sm / am
        return np.stack([gx, gy], axis=-1) / TWO_PI

    def grad_pairs(self, x, xi):
        dx = x[:, 0] - xi[:, 0]
        sp = x[:, 1] + xi[:, 1]
        sm = x[:, 1] - xi[:, 1]
        ap = dx**2 + sp**2
        am = dx**2 + sm**2
        gx = dx / ap - dx / am
        gy = sp / ap - sm / am
        return np.stack([gx, gy], axis=-1) / TWO_PI


class DiskKernel(KernelBackend):
    """Dirichlet Green's function of the disk |x| < a centered at the origin."""

    name = "disk"
    is_green = True
    eval_weight = 3.0

    def __init__(self, radius):
        if radius <= 0:
            raise GeometryError("disk radius must be positive")
        self.radius = float(radius)

    def _check(self, x, boundary_ok=True):
        r = np.hypot(x[:, 0], x[:, 1])
        lim = self.radius * (1.0 + 1e-12) if boundary_ok else self.radius
        if np.any(r > lim):
            raise KernelDomainError("point outside the disk")

    def value_matrix(self, x, xi):
        self._check(x)
        self._check(xi)
        a2 = self.radius**2
        dot = x @ xi.T
        r2 = np.sum(x * x, axis=1)[:, None]
        p2 = np.sum(xi * xi, axis=1)[None, :]
        num = a2 * a2 - 2.0 * a2 * dot + r2 * p2
        den = a2 * (r2 - 2.0 * dot + p2)
        return np.log(num / den) / (2.0 * TWO_PI)

    def value_pairs(self, x, xi):
        self._check(x)
        self._check(xi)
        a2 = self.radius**2
        dot = np.sum(x * xi, axis=1)
        r2 = np.sum(x * x, axis=1)
        p2 = np.sum(xi * xi, axis=1)
        num = a2 * a2 - 2.0 * a2 * dot + r2 * p2
        den = a2 * (r2 - 2.0 * dot + p2)
        return np.log(num / den) / (2.0 * TWO_PI)

    def grad_matrix(self, x, xi):
        a2 = self.radius**2
        dot = x @ xi.T
        r2 = np.sum(x * x, axis=1)[:, None]
        p2 = np.sum(xi * xi, axis=1)[None, :]
        num = a2 * a2 - 2.0 * a2 * dot + r2 * p2
        d = x[:, None, :] - xi[None, :, :]
        dist2 = d[..., 0] ** 2 + d[..., 1] ** 2
        gnum = (-2.0 * a2) * xi[None, :, :] + 2.0 * x[:, None, :] * p2[..., None]
        return (gnum / num[..., None] - 2.0 * d / dist2[..., None]) / (2.0 * TWO_PI)

    def grad_pairs(self, x, xi):
        a2 = self.radius**2
        dot = np.sum(x * xi, axis=1)
        r2 = np.sum(x * x, axis=1)
        p2 = np.sum(xi * xi, axis=1)
        num = (a2 * a2 - 2.0 * a2 * dot + r2 * p2)[:, None]
        d = x - xi
        dist2 = (d[:, 0] ** 2 + d[:, 1] ** 2)[:, None]
        gnum = -2.0 * a2 * xi + 2.0 * x * p2[:, None]
        return (gnum / num - 2.0 * d / dist2) / (2.0 * TWO_PI)


def rectangle_truncation_for_tol(a, b, tol):
    """Smallest series length M whose remainder bound is below tol.

    The truncation remainder of the summed rectangle representation is
    bounded by (b/2pi) * sum_{n>M} q^n / n with q = exp(-pi a / b), which
    decays geometrically.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = math.exp(-math.pi * a / b)
    full = -math.log1p(-q)  # sum_{n>=1} q^n / n
    partial = 0.0
    for m in range(1, 10000):
        partial += q**m / m
        tail = max(full - partial, 0.0)
        if (b / TWO_PI) * tail <= tol:
            return m
    raise RuntimeError("remainder bound did not reach tol")  # pragma: no cover


class RectangleKernel(KernelBackend):
    """Dirichlet Green's function of the rectangle (0,a) x (0,b).

    Uses the image-sum logarithmic part plus an m_terms-term exponentially
    convergent correction series; m_terms defaults to the value needed for
    a 1e-12 remainder bound.
    """

    name = "rectangle"
    is_green = True

    def __init__(self, a, b, m_terms=None, tol=1e-12):
        if a <= 0 or b <= 0:
            raise GeometryError("rectangle sides must be positive")
        self.a = float(a)
        self.b = float(b)
        self.m_terms = int(m_terms) if m_terms else rectangle_truncation_for_tol(a, b, tol)
        self.eval_weight = 8.0 + self.m_terms

    def _check(self, x):
        tol = 1e-12 * max(self.a, self.b)
        if (
            np.any(x[:, 0] < -tol)
            or np.any(x[:, 0] > self.a + tol)
            or np.any(x[:, 1] < -tol)
            or np.any(x[:, 1] > self.b + tol)
        ):
            raise KernelDomainError("point outside the rectangle")

    def value_matrix(self, x, xi):
        self._check(x)
        self._check(xi)
        return _accel.rect_green_matrix(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    def value_pairs(self, x, xi):
        self._check(x)
        self._check(xi)
        return _accel.rect_green_pairs(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    def grad_matrix(self, x, xi):
        return _accel.rect_green_gradient(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    def grad_pairs(self, x, xi):
        return _accel.rect_green_gradient_pairs(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    # the regular (smooth) part is available in closed form, which permits
    # exact coincident-point values and coarse-grid sampling of assemblies
    smooth_split = True

    def regular_value_matrix(self, x, xi):
        return _accel.rect_green_regular_matrix(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    def regular_grad_matrix(self, x, xi):
        return _accel.rect_green_regular_gradient(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(xi)
        )

    def regular_diag_normal_deriv(self, x, nx, step=None):
        g = _accel.rect_green_regular_gradient_pairs(
            self.a, self.b, self.m_terms, np.ascontiguousarray(x), np.ascontiguousarray(x)
        )
        return g[:, 0] * nx[:, 0] + g[:, 1] * nx[:, 1]


class NumericalGreenHandle:
    """Single-layer corrector built on a discretized fixed boundary.

    Holds the fixed-boundary collocation block and its LU factorization;
    the Green value at (x, xi) is the fundamental kernel plus the corrector
    potential whose density solves G11 mu_psi = g(xi), where g encodes the
    negative boundary trace of the fundamental solution.
    """

    def __init__(self, parts, g11, lu_piv):
        self.parts = parts  # list of (DiscretizedBoundary, BoundaryCondition)
        self.g11 = g11
        self.lu_piv = lu_piv
        self.nodes = np.concatenate([b.nodes for b, _ in parts])
        self.col_weights = np.concatenate([np.full(b.n, b.h) for b, _ in parts])
        rp, rn, ra, rb = [], [], [], []
        for b, bc in parts:
            if bc.kind == "dirichlet":
                rp.append(b.colloc_points())
                rn.append(b.colloc_normals())
            elif bc.kind == "neumann":
                rp.append(b.nodes)
                rn.append(b.normals)
            else:
                rp.append(b.colloc_points())
                rn.append(b.colloc_normals())
            ra.append(np.full(b.n, bc.alpha))
            rb.append(np.full(b.n, bc.beta))
        self.row_points = np.concatenate(rp)
        self.row_normals = np.concatenate(rn)
        self.row_alpha = np.concatenate(ra)
        self.row_beta = np.concatenate(rb)
        self.n1 = len(self.nodes)
        self._fund = FundamentalKernel()

    def trace_matrix(self, xi):
        """g(xi): negative (alpha, beta)-trace of the fundamental solution."""
        g = np.zeros((self.n1, len(xi)))
        has_a = self.row_alpha != 0.0
        has_b = self.row_beta != 0.0
        if np.any(has_a):
            g[has_a] = -self.row_alpha[has_a, None] * self._fund.value_matrix(
                self.row_points[has_a], xi
            )
        if np.any(has_b):
            g[has_b] -= self.row_beta[has_b, None] * self._fund.normal_deriv_matrix(
                self.row_points[has_b], self.row_normals[has_b], xi
            )
        return g

    def psi_coeff(self, xi):
        """Corrector densities mu_psi(., xi), one column per source point."""
        return lu_solve(self.lu_piv, self.trace_matrix(xi))


class NumericalGreenKernel(KernelBackend):
    name = "numerical"
    is_green = True
    eval_weight = 1.0  # log-kernel parts; corrector cost is modeled structurally

    def __init__(self, handle):
        self.handle = handle
        self._fund = FundamentalKernel()

    def _psi_weighted(self, x):
        # h-weighted single-layer evaluation matrix from the fixed nodes to x
        return self._fund.value_matrix(x, self.handle.nodes) * self.handle.col_weights

    def value_matrix(self, x, xi):
        return self._fund.value_matrix(x, xi) + self._psi_weighted(x) @ self.handle.psi_coeff(xi)

    def value_pairs(self, x, xi):
        psi = self.handle.psi_coeff(xi)
        corr = np.sum(self._psi_weighted(x) * psi.T, axis=1)
        return self._fund.value_pairs(x, xi) + corr

    def grad_matrix(self, x, xi):
        g = self._fund.grad_matrix(x, xi)
        gfix = self._fund.grad_matrix(x, self.handle.nodes) * self.handle.col_weights[None, :, None]
        psi = self.handle.psi_coeff(xi)
        return g + np.einsum("ijk,jl->ilk", gfix, psi)

    def grad_pairs(self, x, xi):
        g = self._fund.grad_pairs(x, xi)
        gfix = self._fund.grad_matrix(x, self.handle.nodes) * self.handle.col_weights[None, :, None]
        psi = self.handle.psi_coeff(xi)
        g[:, 0] += np.sum(gfix[..., 0] * psi.T, axis=1)
        g[:, 1] += np.sum(gfix[..., 1] * psi.T, axis=1)
        return g

    def normal_deriv_matrix(self, x, nx, xi):
        nd = self._fund.normal_deriv_matrix(x, nx, xi)
        ndfix = self._fund.normal_deriv_matrix(x, nx, self.handle.nodes) * self.handle.col_weights
        return nd + ndfix @ self.handle.psi_coeff(xi)

    def regular_diag_normal_deriv(self, x, nx, step=None):
        # corrector is a smooth single layer over the fixed boundary;
        # its field derivative at coincident (x, x) is evaluated exactly
        ndfix = self._fund.normal_deriv_matrix(x, nx, self.handle.nodes) * self.handle.col_weights
        psi = self.handle.psi_coeff(x)
        return np.sum(ndfix * psi.T, axis=1)

    def single_layer(self, x, nodes, weighted_mu):
        base = self._fund.value_matrix(x, nodes) @ weighted_mu
        rhs = self.handle.trace_matrix(nodes) @ weighted_mu
        corr_mu = lu_solve(self.handle.lu_piv, rhs)
        return base + self._psi_weighted(x) @ corr_mu

    def single_layer_grad(self, x, nodes, weighted_mu):
        g = np.einsum("ijk,j->ik", self._fund.grad_matrix(x, nodes), weighted_mu)
        rhs = self.handle.trace_matrix(nodes) @ weighted_mu
        corr_mu = lu_solve(self.handle.lu_piv, rhs)
        gfix = self._fund.grad_matrix(x, self.handle.nodes)
        w = self.handle.col_weights * corr_mu
        g[:, 0] += gfix[..., 0] @ w
        g[:, 1] += gfix[..., 1] @ w
        return g


def build_numerical_green(fixed_curves, bc, h, side="interior"):
    """Assemble and factorize the fixed-boundary block for a Green's kernel.

    fixed_curves may be a single curve or a list; each is discretized with
    n = round(1/h) nodes. The returned handle caches the LU factorization,
    which is reused by every kernel evaluation at this mesh size.
    """
    from . import bie  # deferred: bie depends on kernels for assembly

    if not isinstance(fixed_curves, (list, tuple)):
        fixed_curves = [fixed_curves]
    n = int(round(1.0 / h))
    if abs(n * h - 1.0) > 1e-9:
        raise ValueError("mesh size h must divide the unit parameter period")
    parts = [(bie.DiscretizedBoundary(c, n, side=side), bc) for c in fixed_curves]
    fund = FundamentalKernel()
    g11, _, _ = bie.assemble_blocks_matrix(fund, parts)
    try:
        lu_piv = lu_factor(g11)
    except Exception as exc:  # pragma: no cover - LAPACK failure path
        raise bie.SolverError(f"fixed-boundary block factorization failed: {exc}") from exc
    cond = condition_estimate(g11, lu_piv)
    if not np.isfinite(cond) or cond > 1e14:
        raise bie.SolverError(
            "fixed-boundary block is numerically singular "
            f"(condition estimate {cond:.2e}); for Dirichlet data this occurs "
            "when the boundary has conformal radius 1 - rescale the geometry"
        )
    return NumericalGreenHandle(parts, g11, lu_piv)


# scalar convenience forms -------------------------------------------------

def fundamental_value(x, xi):
    """-(1/2pi) ln|x - xi|."""
    return FundamentalKernel().value(x, xi)


def halfplane_green(x, xi):
    return HalfPlaneKernel().value(x, xi)


def disk_green(a, x, xi):
    return DiskKernel(a).value(x, xi)


def rectangle_green(a, b, x, xi, m_terms=None):
    return RectangleKernel(a, b, m_terms).value(x, xi)


def kernel_normal_derivative(backend, x, n, xi):
    """Directional derivative of backend.value(., xi) at x along n."""
    return backend.normal_derivative(x, n, xi)
