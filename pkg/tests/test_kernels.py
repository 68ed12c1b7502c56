"""Kernel backends against closed-form values and independent oracles."""

import math

import numpy as np
import pytest

from greenpot import bie
from greenpot.geometry import Circle, unit_square
from greenpot.kernels import (
    BoundaryCondition,
    DiskKernel,
    FundamentalKernel,
    HalfPlaneKernel,
    KernelDomainError,
    NumericalGreenKernel,
    RectangleKernel,
    SingularPointError,
    build_numerical_green,
    dirichlet,
    disk_green,
    fundamental_value,
    halfplane_green,
    kernel_normal_derivative,
    neumann,
    rectangle_green,
    rectangle_truncation_for_tol,
)

TWO_PI = 2 * math.pi


def spectral_rectangle_series(a, b, x, xi, nmax=400):
    """Slowly converging double sine expansion; independent oracle."""
    n = np.arange(1, nmax + 1)
    m = np.arange(1, nmax + 1)
    sm = np.sin(m * np.pi * x[0] / a) * np.sin(m * np.pi * xi[0] / a)
    sn = np.sin(n * np.pi * x[1] / b) * np.sin(n * np.pi * xi[1] / b)
    denom = (n[:, None] ** 2) * np.pi**2 * a**2 + (m[None, :] ** 2) * np.pi**2 * b**2
    return float(4 * a * b * np.sum(sn[:, None] * sm[None, :] / denom))


class TestBoundaryCondition:
    def test_kinds(self):
        assert dirichlet().kind == "dirichlet"
        assert neumann().kind == "neumann"
        assert BoundaryCondition(2.0, 3.0).kind == "robin"

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            BoundaryCondition(0.0, 0.0)


class TestFundamental:
    def test_unit_distance(self):
        assert fundamental_value((1.0, 0.0), (0.0, 0.0)) == 0.0

    def test_e_distance(self):
        assert fundamental_value((math.e, 0.0), (0.0, 0.0)) == pytest.approx(-1 / TWO_PI, rel=1e-14)

    def test_half_distance(self):
        assert fundamental_value((0.5, 0.0), (0.0, 0.0)) == pytest.approx(
            math.log(2.0) / TWO_PI, rel=1e-14
        )

    def test_singular(self):
        with pytest.raises(SingularPointError):
            fundamental_value((0.3, 0.2), (0.3, 0.2))

    def test_normal_derivative_closed_form(self):
        # -(1/2pi) (x-xi).n / |x-xi|^2
        got = kernel_normal_derivative(FundamentalKernel(), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0))
        assert got == pytest.approx(-1 / TWO_PI, rel=1e-14)


class TestHalfPlane:
    def test_boundary_vanishes(self):
        assert halfplane_green((0.3, 0.0), (0.1, 0.8)) == pytest.approx(0.0, abs=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x, xi = rng.uniform(0.1, 3.0, 2), rng.uniform(0.1, 3.0, 2)
            assert halfplane_green(x, xi) == pytest.approx(halfplane_green(xi, x), rel=1e-13)

    def test_stacked_sources(self):
        assert halfplane_green((0.0, 1.0), (0.0, 2.0)) == pytest.approx(
            math.log(3.0) / TWO_PI, rel=1e-14
        )

    def test_below_axis_rejected(self):
        with pytest.raises(KernelDomainError):
            halfplane_green((0.0, -0.5), (0.0, 1.0))


class TestDisk:
    def test_boundary_vanishes(self):
        a = 1.7
        for ang in np.linspace(0, 2 * np.pi, 91 // 10):
            x = (a * math.cos(ang), a * math.sin(ang))
            assert abs(disk_green(a, x, (0.4, -0.3))) < 1e-12

    def test_center_value(self):
        a, xi = 2.0, np.array([0.5, 0.3])
        expected = math.log(a / np.hypot(*xi)) / TWO_PI
        assert disk_green(a, (0.0, 0.0), xi) == pytest.approx(expected, abs=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = 1.3
        for _ in range(20):
            x = rng.uniform(-0.7, 0.7, 2)
            xi = rng.uniform(-0.7, 0.7, 2)
            assert disk_green(a, x, xi) == pytest.approx(disk_green(a, xi, x), rel=1e-12)

    def test_outside_rejected(self):
        with pytest.raises(KernelDomainError):
            disk_green(1.0, (1.5, 0.0), (0.1, 0.1))

    def test_boundary_tangential_derivative_vanishes(self):
        a = 1.0
        kern = DiskKernel(a)
        x = np.array([math.cos(0.7), math.sin(0.7)])
        tangent = np.array([-math.sin(0.7), math.cos(0.7)])
        d = kernel_normal_derivative(kern, x, tangent, (0.2, -0.4))
        assert abs(d) < 1e-12


class TestRectangleTruncation:
    def test_unit_square_tolerance(self):
        m = rectangle_truncation_for_tol(1.0, 1.0, 1e-12)
        assert 1 <= m <= 12

    def test_loose_tolerance_minimal(self):
        assert rectangle_truncation_for_tol(1.0, 1.0, 1.0) == 1

    def test_monotone_in_tol(self):
        tols = np.logspace(-14, -2, 9)
        ms = [rectangle_truncation_for_tol(1.0, 1.0, t) for t in tols]
        assert all(a >= b for a, b in zip(ms, ms[1:]))


class TestRectangle:
    def test_matches_spectral_series(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.uniform(0.08, 0.92, 2)
            xi = rng.uniform(0.08, 0.92, 2)
            if np.hypot(*(x - xi)) < 0.05:
                xi = 1.0 - xi
            got = rectangle_green(1.0, 1.0, x, xi)
            want = spectral_rectangle_series(1.0, 1.0, x, xi, 400)
            assert got == pytest.approx(want, abs=1e-4)

    def test_boundary_vanishes(self):
        kern = RectangleKernel(1.0, 1.0)
        xi = np.array([[0.3, 0.4]])
        s = np.linspace(0.05, 0.95, 7)
        edges = [np.column_stack([s, np.zeros_like(s)]), np.column_stack([s, np.ones_like(s)]),
                 np.column_stack([np.zeros_like(s), s]), np.column_stack([np.ones_like(s), s])]
        for pts in edges:
            assert np.max(np.abs(kern.value_matrix(pts, xi))) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        kern = RectangleKernel(1.0, 1.0)
        x = rng.uniform(0.1, 0.9, (50, 2))
        xi = rng.uniform(0.1, 0.9, (50, 2))
        a = kern.value_matrix(x, xi)
        b = kern.value_matrix(xi, x)
        np.testing.assert_allclose(a, b.T, rtol=0, atol=1e-12)

    def test_nonsquare_sides_vanish(self):
        kern = RectangleKernel(2.0, 0.5)
        xi = np.array([[0.7, 0.2]])
        pts = np.array([[0.0, 0.3], [2.0, 0.1], [1.1, 0.0], [0.4, 0.5]])
        assert np.max(np.abs(kern.value_matrix(pts, xi))) < 1e-10

    def test_outside_rejected(self):
        with pytest.raises(KernelDomainError):
            rectangle_green(1.0, 1.0, (1.2, 0.5), (0.3, 0.3))

    def test_singularity_splitting(self):
        kern = RectangleKernel(1.0, 1.0)
        xi = np.array([0.37, 0.52])
        for direction in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8]):
            v = []
            for dist in (1e-4, 1e-6):
                x = xi + dist * np.array(direction)
                split = kern.value_matrix(x[None, :], xi[None, :])[0, 0] + math.log(dist) / TWO_PI
                v.append(split)
            assert abs(v[0] - v[1]) < 1e-3


def _fd_normal_derivative(kern, x, n, xi, step=1e-6):
    xp = np.asarray(x) + step * np.asarray(n)
    xm = np.asarray(x) - step * np.asarray(n)
    return (kern.value(xp, xi) - kern.value(xm, xi)) / (2 * step)


@pytest.mark.parametrize(
    "kern,x,xi",
    [
        (FundamentalKernel(), (0.9, 0.3), (0.1, 0.6)),
        (HalfPlaneKernel(), (0.4, 0.8), (0.9, 0.5)),
        (DiskKernel(2.0), (0.5, 0.2), (-0.4, 0.7)),
        (RectangleKernel(1.0, 1.0), (0.25, 0.65), (0.7, 0.3)),
    ],
)
def test_normal_derivative_matches_finite_differences(kern, x, xi):
    n = np.array([0.6, 0.8])
    got = kernel_normal_derivative(kern, x, n, xi)
    want = _fd_normal_derivative(kern, x, n, xi)
    assert got == pytest.approx(want, rel=1e-6)


class TestGreenSymmetryProperty:
    @pytest.mark.parametrize(
        "kern,lo,hi",
        [
            (HalfPlaneKernel(), (0.0, 0.05), (2.0, 2.0)),
            (DiskKernel(1.5), (-1.0, -1.0), (1.0, 1.0)),
            (RectangleKernel(1.0, 1.0), (0.05, 0.05), (0.95, 0.95)),
        ],
    )
    def test_symmetry_on_random_pairs(self, kern, lo, hi):
        rng = np.random.default_rng(0)
        count = 0
        while count < 100:
            x = rng.uniform(lo, hi)
            xi = rng.uniform(lo, hi)
            if np.hypot(*(x - xi)) < 0.1:
                continue
            count += 1
            a, b = kern.value(x, xi), kern.value(xi, x)
            assert abs(a - b) <= 1e-10 * (1 + abs(a))


@pytest.fixture(scope="module")
def disk_handle():
    return build_numerical_green(Circle((0, 0), 2.0), dirichlet(), 1.0 / 512, side="interior")


class TestNumericalGreen:

    def test_factorization_residual(self, disk_handle):
        from scipy.linalg import lu_solve

        rng = np.random.default_rng(5)
        v = rng.standard_normal(disk_handle.g11.shape[0])
        w = disk_handle.g11 @ lu_solve(disk_handle.lu_piv, v)
        assert np.max(np.abs(w - v)) <= 1e-10 * np.max(np.abs(v))

    def test_matches_disk_green(self, disk_handle):
        kern = NumericalGreenKernel(disk_handle)
        exact = DiskKernel(2.0)
        rng = np.random.default_rng(6)
        x = rng.uniform(-1.2, 1.2, (10, 2))
        xi = rng.uniform(-1.2, 1.2, (10, 2))
        err = np.max(np.abs(kern.value_matrix(x, xi) - exact.value_matrix(x, xi)))
        assert err < 1e-5

    def test_second_order_against_rectangle(self):
        exact = RectangleKernel(1.0, 1.0)
        rng = np.random.default_rng(7)
        x = rng.uniform(0.25, 0.75, (8, 2))
        xi = rng.uniform(0.25, 0.75, (8, 2))
        errs = []
        for n1 in (128, 256):
            handle = build_numerical_green(unit_square(), dirichlet(), 1.0 / n1, side="interior")
            kern = NumericalGreenKernel(handle)
            errs.append(np.max(np.abs(kern.value_matrix(x, xi) - exact.value_matrix(x, xi))))
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    def test_corrector_is_harmonic(self, disk_handle):
        # 5-point Laplacian of value - fundamental tends to zero
        kern = NumericalGreenKernel(disk_handle)
        fund = FundamentalKernel()
        xi = np.array([[0.6, -0.2]])
        x0 = np.array([-0.5, 0.4])
        out = []
        for h in (0.02, 0.01):
            stencil = x0 + h * np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])
            psi = kern.value_matrix(stencil, xi)[:, 0] - fund.value_matrix(stencil, xi)[:, 0]
            out.append(abs(psi[1] + psi[2] + psi[3] + psi[4] - 4 * psi[0]) / h**2)
        assert out[1] < max(4 * out[0], 1e-8)

    def test_normal_derivative_matches_fd(self, disk_handle):
        kern = NumericalGreenKernel(disk_handle)
        x, xi = np.array([0.3, -0.2]), np.array([0.9, 0.4])
        n = np.array([0.8, -0.6])
        got = kern.normal_derivative(x, n, xi)
        want = _fd_normal_derivative(kern, x, n, xi)
        assert got == pytest.approx(want, rel=1e-6)

    def test_unit_conformal_radius_fails(self):
        with pytest.raises(bie.SolverError, match="conformal"):
            build_numerical_green(Circle((0, 0), 1.0), dirichlet(), 1.0 / 64, side="interior")


def test_regular_diag_matches_difference_quotient():
    kern = RectangleKernel(1.0, 1.0)
    x = np.array([[0.3, 0.55], [0.62, 0.4]])
    nx = np.array([[1.0, 0.0], [0.0, 1.0]])
    exact = kern.regular_diag_normal_deriv(x, nx)
    generic = KernelBackendDifference(kern, x, nx)
    np.testing.assert_allclose(exact, generic, rtol=1e-7)


def KernelBackendDifference(kern, x, nx, step=1e-5):
    from greenpot import _accel

    xp = x + step * nx
    xm = x - step * nx
    psi_p = kern.value_pairs(xp, x) - _accel.log_potential_pairs(xp, x)
    psi_m = kern.value_pairs(xm, x) - _accel.log_potential_pairs(xm, x)
    return (psi_p - psi_m) / (2 * step)
