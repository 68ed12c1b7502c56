"""Closed boundary curves, random aperture sampling and offset contours.

All curves are 1-periodic parameterizations t in [0, 1). Normals returned
by :func:`eval_frame` point outward with respect to the region enclosed by
the curve; on an aperture that is *into* the surrounding solution domain.
Curvature is signed so that a circle has curvature 1/radius regardless of
the parameterization direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

MIN_SPEED = 1e-12


class GeometryError(ValueError):
    pass


def _as_t_array(t):
    t = np.asarray(t, dtype=float)
    return np.atleast_1d(t) % 1.0, t.ndim == 0


class ClosedCurve:
    """Smooth 1-periodic closed curve.

    Subclasses provide ``eval``, ``deriv`` and ``second_deriv``, each
    vectorized over a 1-d array of parameters and returning (n, 2) arrays.
    ``orientation`` is +1 for counterclockwise, -1 for clockwise.
    """

    orientation = 1

    def eval(self, t):
        raise NotImplementedError

    def deriv(self, t):
        raise NotImplementedError

    def second_deriv(self, t):
        raise NotImplementedError

    def frame(self, t):
        """Points, speeds, outward unit normals and signed curvatures at t."""
        t, scalar = _as_t_array(t)
        p = self.eval(t)
        d1 = self.deriv(t)
        d2 = self.second_deriv(t)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        if np.any(speed <= MIN_SPEED):
            raise GeometryError("degenerate parameterization: |curve'(t)| ~ 0")
        s = float(self.orientation)
        normal = np.stack([d1[:, 1], -d1[:, 0]], axis=-1) * (s / speed[:, None])
        curv = s * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
        if scalar:
            return p[0], speed[0], normal[0], curv[0]
        return p, speed, normal, curv

    def length(self, n=2048):
        t = np.arange(n) / n
        d1 = self.deriv(t)
        return float(np.mean(np.hypot(d1[:, 0], d1[:, 1])))

    def offset(self, d):
        return offset_contour(self, d)


def eval_frame(curve, t):
    """Point, speed, outward unit normal and curvature at parameter t."""
    return curve.frame(t)


class Circle(ClosedCurve):
    def __init__(self, center, radius, orientation=1):
        if radius <= 0:
            raise GeometryError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.orientation = 1 if orientation >= 0 else -1

    def _angles(self, t):
        return TWO_PI * t * self.orientation

    def eval(self, t):
        a = self._angles(np.asarray(t, dtype=float))
        return self.center + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def deriv(self, t):
        a = self._angles(np.asarray(t, dtype=float))
        w = TWO_PI * self.orientation
        return self.radius * w * np.stack([-np.sin(a), np.cos(a)], axis=-1)

    def second_deriv(self, t):
        a = self._angles(np.asarray(t, dtype=float))
        return -self.radius * TWO_PI**2 * np.stack([np.cos(a), np.sin(a)], axis=-1)


class TrigRadiusCurve(ClosedCurve):
    """Star-shaped curve r(t) = r0 + sum_n a_n cos(2 pi n t) + b_n sin(2 pi n t)."""

    def __init__(self, center, base_radius, cos_coeffs=(), sin_coeffs=()):
        self.center = np.asarray(center, dtype=float)
        self.base_radius = float(base_radius)
        self.cos_coeffs = np.asarray(cos_coeffs, dtype=float)
        self.sin_coeffs = np.asarray(sin_coeffs, dtype=float)
        if self.cos_coeffs.shape != self.sin_coeffs.shape:
            raise GeometryError("cos and sin coefficient arrays must have equal length")
        self.orientation = 1

    def radius(self, t, order=0):
        t = np.asarray(t, dtype=float)
        n = np.arange(1, self.cos_coeffs.size + 1)
        ang = TWO_PI * np.multiply.outer(t, n)
        w = (TWO_PI * n) ** order
        if order == 0:
            r = self.base_radius + np.cos(ang) @ self.cos_coeffs + np.sin(ang) @ self.sin_coeffs
        elif order == 1:
            r = -np.sin(ang) @ (w * self.cos_coeffs) + np.cos(ang) @ (w * self.sin_coeffs)
        elif order == 2:
            r = -np.cos(ang) @ (w * self.cos_coeffs) - np.sin(ang) @ (w * self.sin_coeffs)
        else:
            raise ValueError(order)
        return r

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        a = TWO_PI * t
        e = np.stack([np.cos(a), np.sin(a)], axis=-1)
        return self.center + self.radius(t)[..., None] * e

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        a = TWO_PI * t
        e = np.stack([np.cos(a), np.sin(a)], axis=-1)
        ep = TWO_PI * np.stack([-np.sin(a), np.cos(a)], axis=-1)
        return self.radius(t, 1)[..., None] * e + self.radius(t)[..., None] * ep

    def second_deriv(self, t):
        t = np.asarray(t, dtype=float)
        a = TWO_PI * t
        e = np.stack([np.cos(a), np.sin(a)], axis=-1)
        ep = TWO_PI * np.stack([-np.sin(a), np.cos(a)], axis=-1)
        r, r1, r2 = self.radius(t), self.radius(t, 1), self.radius(t, 2)
        return (r2 - TWO_PI**2 * r)[..., None] * e + (2.0 * r1)[..., None] * ep

    def min_radius(self, n=1024):
        return float(np.min(self.radius(np.arange(n) / n)))


class Polygon(ClosedCurve):
    """Piecewise-linear closed boundary, parameterized by arc length.

    Corner parameters are the cumulative perimeter fractions; node counts
    used to discretize a polygon must place nodes on every corner.
    """

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise GeometryError("need at least 3 vertices")
        self.vertices = v
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        if np.any(lengths <= 0):
            raise GeometryError("repeated vertices")
        self.perimeter = float(lengths.sum())
        self.corner_fracs = np.concatenate([[0.0], np.cumsum(lengths) / self.perimeter])
        self._edges = edges
        area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        self.orientation = 1 if area2 > 0 else -1

    def _locate(self, t):
        idx = np.searchsorted(self.corner_fracs, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.vertices) - 1)
        frac0 = self.corner_fracs[idx]
        frac1 = self.corner_fracs[idx + 1]
        local = (t - frac0) / (frac1 - frac0)
        return idx, local

    def eval(self, t):
        t = np.asarray(t, dtype=float) % 1.0
        idx, local = self._locate(t)
        return self.vertices[idx] + local[..., None] * self._edges[idx]

    def deriv(self, t):
        t = np.asarray(t, dtype=float) % 1.0
        idx, _ = self._locate(t)
        seg_len = np.hypot(self._edges[idx, 0], self._edges[idx, 1])
        # constant speed = perimeter in arclength parameterization
        return self._edges[idx] / seg_len[..., None] * self.perimeter

    def second_deriv(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (2,))

    def validate_node_count(self, n, tol=1e-9):
        """Every corner must land on a node for an n-point discretization."""
        scaled = self.corner_fracs[:-1] * n
        if np.any(np.abs(scaled - np.round(scaled)) > tol):
            raise GeometryError(
                f"node count {n} does not place nodes on all corners "
                f"(corner fractions {self.corner_fracs[:-1]})"
            )


def unit_square():
    return Polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


class OffsetCurve(ClosedCurve):
    """Parallel curve base(t) + d * outward_normal(t)."""

    def __init__(self, base, d):
        self.base = base
        self.d = float(d)
        self.orientation = base.orientation
        if self.d != 0.0:
            _, _, _, curv = base.frame(np.arange(256) / 256)
            if np.any(1.0 + self.d * curv <= 0):
                raise GeometryError(
                    f"offset {d} exceeds the minimal radius of curvature; "
                    "the parallel curve would self-intersect"
                )

    def _normal(self, t):
        _, _, normal, _ = self.base.frame(t)
        return normal

    def eval(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.base.eval(t) + self.d * self._normal(t)

    def deriv(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d1 = self.base.deriv(t)
        d2 = self.base.second_deriv(t)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        s = float(self.base.orientation)
        n_raw = np.stack([d1[:, 1], -d1[:, 0]], axis=-1) * s
        n_raw_dot = np.stack([d2[:, 1], -d2[:, 0]], axis=-1) * s
        sp_dot = (d1[:, 0] * d2[:, 0] + d1[:, 1] * d2[:, 1]) / speed
        n_dot = n_raw_dot / speed[:, None] - n_raw * (sp_dot / speed**2)[:, None]
        return d1 + self.d * n_dot

    def second_deriv(self, t, step=1e-6):
        # third derivative of the base curve is not part of the curve
        # contract, so fall back to differencing the first derivative
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (self.deriv(t + step) - self.deriv(t - step)) / (2.0 * step)


def offset_contour(curve, d):
    """Outward parallel curve at distance d (d=0 returns the curve itself)."""
    if d == 0.0:
        return curve
    return OffsetCurve(curve, d)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream, a pure function of (seed, stream_id).

    The same (seed, stream_id) always produces the same draw sequence, on
    any thread and in any execution order.
    """

    seed: int
    stream_id: int

    def generator(self):
        key = np.array([self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def stream_for(seed, level, sample):
    """Stream for Monte Carlo sample `sample` at hierarchy level `level`."""
    if not (0 <= level < 2**16) or not (0 <= sample < 2**48):
        raise ValueError("level/sample out of packing range")
    return RngStream(seed=seed, stream_id=(level << 48) | sample)


@dataclass(frozen=True)
class RandomApertureModel:
    """Circular aperture with uniformly perturbed center and radius.

    The radius is r(t) = mean_radius + sigma_r * sum_{n<=modes} (a_n cos(2 pi n t)
    + b_n sin(2 pi n t)) with a_n, b_n ~ U(-sqrt(3), sqrt(3)), and the center is
    mean_center + (sigma_x U(-1,1), sigma_y U(-1,1)).
    """

    mean_center: tuple
    sigma_x: float
    sigma_y: float
    mean_radius: float
    sigma_r: float
    modes: int

    def __post_init__(self):
        if self.mean_radius <= 0:
            raise GeometryError("mean_radius must be positive")
        if min(self.sigma_x, self.sigma_y, self.sigma_r) < 0:
            raise GeometryError("sigma parameters must be nonnegative")
        if self.modes < 0:
            raise GeometryError("modes must be nonnegative")

    @property
    def positivity_certified(self):
        """Worst-case bound mean_radius - sigma_r * modes * 2 sqrt(3) > 0.

        Sufficient for a positive radius on every draw. When it fails the
        model is still usable; sampling then checks each realization and
        raises (never silently resamples) on a nonpositive radius.
        """
        return self.mean_radius - self.sigma_r * self.modes * 2.0 * math.sqrt(3.0) > 0.0


class ApertureSampleError(RuntimeError):
    pass


def sample_aperture(model, rng, check_nodes=1024):
    """Draw one aperture realization; pure function of (model, rng stream).

    rng may be an RngStream or a numpy Generator.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    cshift = gen.uniform(-1.0, 1.0, 2)
    center = np.asarray(model.mean_center, dtype=float) + np.array(
        [model.sigma_x, model.sigma_y]
    ) * cshift
    s3 = math.sqrt(3.0)
    a_n = model.sigma_r * gen.uniform(-s3, s3, model.modes)
    b_n = model.sigma_r * gen.uniform(-s3, s3, model.modes)
    curve = TrigRadiusCurve(center, model.mean_radius, a_n, b_n)
    if not model.positivity_certified:
        rmin = curve.min_radius(check_nodes)
        if rmin <= 0.0:
            raise ApertureSampleError(
                f"sampled aperture radius is nonpositive (min {rmin:.3e}); "
                "not resampling to keep streams reproducible"
            )
    return curve
