"""Boundary integral discretization and dense solvers.

Second-kind (Neumann/Robin) equations use the Nystrom-trapezoidal scheme
collocated at the quadrature nodes; first-kind (Dirichlet) equations use
quadrature-based collocation at the nodes shifted by zeta = 1/6, which is
the stable choice for logarithmic kernels on closed curves. A two-point
(1/6, 5/6) variant is available to produce third-order reference densities
for convergence studies.

Conventions: normals are outward with respect to the region enclosed by
each curve. A boundary with ``side="exterior"`` borders a solution domain
lying outside the curve (an aperture); ``side="interior"`` encloses the
domain. The sign of the single-layer jump term follows from the side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._lapack import condition_estimate, lu_factor, lu_solve
from .geometry import GeometryError, Polygon

ZETA1 = 1.0 / 6.0
ZETA2 = 5.0 / 6.0

COND_LIMIT = 1e14
RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    pass


class DiscretizedBoundary:
    """Uniform-parameter discretization of a closed curve.

    Nodes sit at t = k/n; Dirichlet collocation points at t = (k + 1/6)/n.
    """

    def __init__(self, curve, n, side="exterior"):
        if n < 4:
            raise GeometryError("need at least 4 nodes")
        if side not in ("exterior", "interior"):
            raise ValueError(f"unknown side {side!r}")
        if isinstance(curve, Polygon):
            curve.validate_node_count(n)
        self.curve = curve
        self.n = int(n)
        self.h = 1.0 / self.n
        self.side = side
        t = np.arange(self.n) * self.h
        self.t_nodes = t
        self.nodes, self.speeds, self.normals, self.curvatures = curve.frame(t)
        d = np.diff(np.vstack([self.nodes, self.nodes[:1]]), axis=0)
        self.mesh_width_physical = float(np.max(np.hypot(d[:, 0], d[:, 1])))
        self._colloc = {}

    @property
    def jump_sign(self):
        # single-layer normal-derivative jump seen from the solution domain
        return -0.5 if self.side == "exterior" else 0.5

    def _frame_at(self, zeta):
        if zeta not in self._colloc:
            t = (np.arange(self.n) + zeta) * self.h
            self._colloc[zeta] = self.curve.frame(t)
        return self._colloc[zeta]

    def colloc_points(self, zeta=ZETA1):
        return self._frame_at(zeta)[0]

    def colloc_speeds(self, zeta=ZETA1):
        return self._frame_at(zeta)[1]

    def colloc_normals(self, zeta=ZETA1):
        return self._frame_at(zeta)[2]


def neumann_diagonal(curve, k, h):
    """Continuous-kernel diagonal limit of the fundamental normal-derivative
    kernel on a smooth curve: -curvature/(4 pi) with the outward normal."""
    _, _, _, curv = curve.frame(k * h)
    return -curv / (4.0 * math.pi)


@dataclass
class BieSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    row_kinds: list
    parts: list  # [(DiscretizedBoundary, BoundaryCondition), ...]
    slices: list  # row/column slice per part


@dataclass
class DensitySolution:
    mu: np.ndarray
    boundary: DiscretizedBoundary


@dataclass
class FullBoundaryBlocks:
    g11: np.ndarray
    g12: np.ndarray
    g21: np.ndarray
    g22: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    lu_piv: tuple
    fixed_parts: list
    aperture_part: tuple


def _row_points(boundary, bc):
    """Collocation points/normals for the rows of one boundary part."""
    if bc.kind == "neumann":
        return boundary.nodes, boundary.normals
    return boundary.colloc_points(), boundary.colloc_normals()


def _same_part_fixups(kernel, block, boundary, bc):
    """Diagonal jump and singular-limit terms for a self-interaction block."""
    n = boundary.n
    if bc.kind == "neumann":
        diag_kernel = -boundary.curvatures / (4.0 * math.pi) + kernel.regular_diag_normal_deriv(
            boundary.nodes, boundary.normals
        )
        idx = np.arange(n)
        block[idx, idx] = bc.beta * boundary.h * diag_kernel
        block[idx, idx] += bc.beta * boundary.jump_sign / boundary.speeds
    elif bc.kind == "robin":
        # jump term at the offset collocation point, with the density there
        # interpolated linearly from the neighboring nodes
        idx = np.arange(n)
        sp = boundary.colloc_speeds()
        w = bc.beta * boundary.jump_sign / sp
        block[idx, idx] += (1.0 - ZETA1) * w
        block[idx, (idx + 1) % n] += ZETA1 * w


def _neumann_self_block_split(kernel, boundary, bc):
    """Self-interaction Neumann block via the singular/regular kernel split.

    The free-space part is dense; the smooth regular part is sampled on a
    coarse uniform parameter grid and refined spectrally, which cuts the
    number of expensive kernel evaluations at fine meshes. The result is
    spot-checked against direct evaluation and the caller falls back to
    dense assembly if the curve is too close to the kernel's boundary for
    the coarse sampling to resolve.
    """
    from .kernels import FundamentalKernel

    n = boundary.n
    nd = FundamentalKernel().normal_deriv_matrix(boundary.nodes, boundary.normals, boundary.nodes)
    idx = np.arange(n)
    nd[idx, idx] = -boundary.curvatures / (4.0 * math.pi)
    m = SPLIT_COARSE_NODES
    pc = boundary.curve.eval(np.arange(m) / m)
    g = kernel.regular_grad_matrix(pc, pc)
    gx = _interp2_periodic(g[..., 0], n)
    gy = _interp2_periodic(g[..., 1], n)
    reg = gx * boundary.normals[:, 0][:, None] + gy * boundary.normals[:, 1][:, None]
    rng = np.random.default_rng(0)
    ii = rng.integers(0, n, 24)
    jj = rng.integers(0, n, 24)
    direct = kernel.regular_grad_matrix(boundary.nodes[ii], boundary.nodes[jj])
    probe = direct[np.arange(24), np.arange(24)]
    got = np.stack([gx[ii, jj], gy[ii, jj]], axis=-1)
    scale = max(np.max(np.abs(probe)), 1e-6)
    if np.max(np.abs(got - probe)) > 5e-8 * scale:
        return None
    nd += reg
    block = bc.beta * boundary.h * nd
    block[idx, idx] += bc.beta * boundary.jump_sign / boundary.speeds
    return block


def _block(kernel, row_part, col_part, same):
    (rb, rbc) = row_part
    (cb, _) = col_part
    if (
        same
        and rbc.kind == "neumann"
        and kernel.smooth_split
        and rb.n >= SPLIT_MIN_NODES
    ):
        block = _neumann_self_block_split(kernel, rb, rbc)
        if block is not None:
            return block
    x, nx = _row_points(rb, rbc)
    h = cb.h
    if rbc.kind == "dirichlet":
        return rbc.alpha * h * kernel.value_matrix(x, cb.nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        nd = kernel.normal_deriv_matrix(x, nx, cb.nodes)
    if same and rbc.kind == "neumann":
        np.fill_diagonal(nd, 0.0)  # singular; replaced in _same_part_fixups
    block = rbc.beta * h * nd
    if rbc.kind == "robin":
        block += rbc.alpha * h * kernel.value_matrix(x, cb.nodes)
    if same:
        _same_part_fixups(kernel, block, rb, rbc)
    return block


def assemble_blocks_matrix(kernel, parts):
    """Dense collocation matrix for a list of (boundary, bc) parts.

    Rows and columns are ordered part by part. Returns (matrix, row_kinds,
    slices).
    """
    sizes = [b.n for b, _ in parts]
    total = sum(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    slices = [slice(offsets[i], offsets[i + 1]) for i in range(len(parts))]
    matrix = np.empty((total, total))
    row_kinds = []
    for i, rp in enumerate(parts):
        row_kinds.extend([rp[1].kind] * rp[0].n)
        for j, cp in enumerate(parts):
            matrix[slices[i], slices[j]] = _block(kernel, rp, cp, i == j)
    return matrix, row_kinds, slices


def assemble_rhs(parts, data_fns):
    """Boundary data evaluated at each part's collocation points.

    Each data function is called as f(points, normals).
    """
    out = []
    for (b, bc), fn in zip(parts, data_fns):
        x, nx = _row_points(b, bc)
        if fn is None:
            fn = bc.rhs
        if fn is None:
            out.append(np.zeros(b.n))
        elif callable(fn):
            out.append(np.asarray(fn(x, nx), dtype=float) * np.ones(b.n))
        else:
            out.append(np.asarray(fn, dtype=float) * np.ones(b.n))
    return np.concatenate(out)


def _mix_rows_two_point(a1, a2):
    """Row combination realizing the (1/6, 5/6) two-point qualocation rule
    with the hat-function test space; a1/a2 are collocated at the two
    offsets. Applied per part to keep the combination within each curve."""
    up1 = np.roll(a1, 1, axis=0)  # row l-1 contributions
    up2 = np.roll(a2, 1, axis=0)
    return 0.5 * ((1.0 - ZETA1) * a1 + ZETA1 * up1 + (1.0 - ZETA2) * a2 + ZETA2 * up2)


def assemble_system(kernel, boundary, bc, phi=None, rule="collocation1"):
    """Collocation system for a single boundary (optionally higher order).

    rule="collocation1" is the one-point zeta = 1/6 scheme (second order);
    rule="qualocation2" is the two-point (1/6, 5/6) scheme (third order,
    Dirichlet only), used to build reference densities.
    """
    parts = [(boundary, bc)]
    if rule == "collocation1":
        matrix, row_kinds, slices = assemble_blocks_matrix(kernel, parts)
        rhs = assemble_rhs(parts, [phi])
        return BieSystem(matrix, rhs, row_kinds, parts, slices)
    if rule != "qualocation2":
        raise ValueError(f"unknown rule {rule!r}")
    return assemble_system_two_point(kernel, parts, [phi])


def assemble_system_two_point(kernel, parts, data_fns):
    """Two-point (1/6, 5/6) qualocation system; all parts must be Dirichlet.

    Row combinations stay within each part, so multi-boundary systems mix
    rows curve by curve.
    """
    if any(bc.kind != "dirichlet" for _, bc in parts):
        raise ValueError("the two-point rule applies to Dirichlet rows only")
    sizes = [b.n for b, _ in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    slices = [slice(offsets[i], offsets[i + 1]) for i in range(len(parts))]
    total = sum(sizes)
    matrix = np.empty((total, total))
    rhs = np.empty(total)
    for i, (rb, rbc) in enumerate(parts):
        rows = []
        vals = []
        for zeta in (ZETA1, ZETA2):
            x = rb.colloc_points(zeta)
            rows.append(
                np.hstack(
                    [rbc.alpha * cb.h * kernel.value_matrix(x, cb.nodes) for cb, _ in parts]
                )
            )
            fn = data_fns[i] if data_fns[i] is not None else rbc.rhs
            if fn is None:
                v = 0.0
            elif callable(fn):
                v = fn(x, rb.colloc_normals(zeta))
            else:
                v = fn
            vals.append(np.asarray(v, dtype=float) * np.ones(rb.n))
        matrix[slices[i]] = _mix_rows_two_point(rows[0], rows[1])
        rhs[slices[i]] = _mix_rows_two_point(vals[0][:, None], vals[1][:, None])[:, 0]
    row_kinds = ["dirichlet"] * total
    return BieSystem(matrix, rhs, row_kinds, list(parts), slices)


def _direct_solve(matrix, rhs, context=""):
    lu_piv = lu_factor(matrix)
    cond = condition_estimate(matrix, lu_piv)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SolverError(
            f"{context}system is numerically singular (condition estimate "
            f"{cond:.2e}); Dirichlet single-layer equations are uniquely "
            "solvable only for boundaries with conformal radius != 1 - "
            "rescaling the geometry resolves this"
        )
    mu = lu_solve(lu_piv, rhs)
    res = np.max(np.abs(matrix @ mu - rhs))
    tol = RESIDUAL_RTOL * np.max(np.abs(rhs))
    if np.max(np.abs(rhs)) > 0 and res > tol:
        raise SolverError(f"{context}solve residual {res:.2e} exceeds {tol:.2e}")
    return mu


def solve_density(system):
    """Direct dense solve of a single-boundary collocation system."""
    if len(system.parts) != 1:
        raise ValueError("solve_density expects a single-boundary system")
    mu = _direct_solve(system.matrix, system.rhs)
    return DensitySolution(mu, system.parts[0][0])


def solve_multi(system):
    """Direct dense solve of a multi-boundary system, split per boundary."""
    mu = _direct_solve(system.matrix, system.rhs)
    return [DensitySolution(mu[s], b) for s, (b, _) in zip(system.slices, system.parts)]


def assemble_full_blocks(fixed, aperture, bcs, data, g11=None, lu_piv=None):
    """Blocks of the whole-boundary fundamental-solution system.

    fixed may be one DiscretizedBoundary or a list; bcs = (fixed bc,
    aperture bc); data = (fixed data fn, aperture data fn). Pass g11/lu_piv
    to reuse the fixed-block assembly and factorization across samples of
    one mesh level; only the aperture-dependent blocks are then rebuilt.
    """
    from .kernels import FundamentalKernel

    if not isinstance(fixed, (list, tuple)):
        fixed = [fixed]
    bc1, bc2 = bcs
    f1_fn, f2_fn = data
    fixed_parts = [(b, bc1) for b in fixed]
    ap_part = (aperture, bc2)
    kernel = FundamentalKernel()
    if g11 is None:
        g11, _, _ = assemble_blocks_matrix(kernel, fixed_parts)
        lu_piv = lu_factor(g11)
        cond = condition_estimate(g11, lu_piv)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SolverError(
                f"fixed-boundary block condition estimate {cond:.2e}; see the "
                "conformal-radius caveat for Dirichlet data"
            )
    g12 = np.vstack([_block(kernel, fp, ap_part, False) for fp in fixed_parts])
    g21 = np.hstack([_block(kernel, ap_part, fp, False) for fp in fixed_parts])
    g22 = _block(kernel, ap_part, ap_part, True)
    f1 = assemble_rhs(fixed_parts, [f1_fn] * len(fixed_parts))
    f2 = assemble_rhs([ap_part], [f2_fn])
    return FullBoundaryBlocks(
        g11=g11,
        g12=g12,
        g21=g21,
        g22=g22,
        f1=f1,
        f2=f2,
        lu_piv=lu_piv,
        fixed_parts=fixed_parts,
        aperture_part=ap_part,
    )


def schur_matrix(blocks):
    """G22 - G21 G11^{-1} G12, the reduced aperture system matrix."""
    return blocks.g22 - blocks.g21 @ lu_solve(blocks.lu_piv, blocks.g12)


def schur_solve(blocks):
    """Solve the block system by eliminating the fixed-boundary unknowns.

    Returns (mu2, mu1) for the aperture and fixed boundary densities.
    """
    y12 = lu_solve(blocks.lu_piv, blocks.g12)
    y1 = lu_solve(blocks.lu_piv, blocks.f1)
    s = blocks.g22 - blocks.g21 @ y12
    rhs = blocks.f2 - blocks.g21 @ y1
    mu2 = _direct_solve(s, rhs, context="Schur ")
    mu1 = y1 - y12 @ mu2
    return mu2, mu1


def monolithic_solve(blocks):
    """Solve the unreduced (n1+n2) system; oracle for schur_solve."""
    n1 = blocks.g11.shape[0]
    n2 = blocks.g22.shape[0]
    full = np.empty((n1 + n2, n1 + n2))
    full[:n1, :n1] = blocks.g11
    full[:n1, n1:] = blocks.g12
    full[n1:, :n1] = blocks.g21
    full[n1:, n1:] = blocks.g22
    mu = _direct_solve(full, np.concatenate([blocks.f1, blocks.f2]))
    return mu[n1:], mu[:n1]


def trig_resample(values, m, axis=-1):
    """Trigonometric resampling of 1-periodic nodal values onto m nodes.

    Refinement zero-pads the spectrum (exact interpolation of the trig
    interpolant); coarsening truncates it (aliasing-free projection).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if m == n:
        return values
    spec = np.fft.rfft(values, axis=axis)
    sl = [slice(None)] * spec.ndim
    if m > n:
        if n % 2 == 0:
            spec = spec.copy()
            sl[axis] = -1
            spec[tuple(sl)] *= 0.5  # split the Nyquist mode when embedding
    else:
        sl[axis] = slice(0, m // 2 + 1)
        spec = spec[tuple(sl)].copy()
        if m % 2 == 0:
            sl[axis] = -1
            spec[tuple(sl)] = spec[tuple(sl)].real
    return np.fft.irfft(spec, n=m, axis=axis) * (m / n)


def _interp2_periodic(grid, n):
    """Spectral refinement of a doubly 1-periodic uniform grid to n x n."""
    return trig_resample(trig_resample(grid, n, axis=0), n, axis=1)


SPLIT_MIN_NODES = 128
SPLIT_COARSE_NODES = 96


def resample_density(density, eval_nodes, interp="trig"):
    """Quadrature nodes and h-weighted density for potential evaluation,
    optionally interpolated onto a finer grid of the exact curve.

    Returns (nodes, weighted_mu, physical mesh width).
    """
    b = density.boundary
    if eval_nodes is None or eval_nodes <= b.n:
        return b.nodes, b.h * density.mu, b.mesh_width_physical
    m = int(eval_nodes)
    t = np.arange(m) / m
    nodes = b.curve.eval(t)
    if interp == "trig":
        mu = trig_resample(density.mu, m)
    elif interp == "linear":
        tp = np.concatenate([b.t_nodes, [1.0]])
        vp = np.concatenate([density.mu, density.mu[:1]])
        mu = np.interp(t, tp, vp)
    else:
        raise ValueError(f"unknown interp {interp!r}")
    d = np.diff(np.vstack([nodes, nodes[:1]]), axis=0)
    width = float(np.max(np.hypot(d[:, 0], d[:, 1])))
    return nodes, mu / m, width


def _check_distance(x, nodes, min_dist):
    if min_dist <= 0:
        return
    d2 = np.min(
        (x[:, None, 0] - nodes[None, :, 0]) ** 2 + (x[:, None, 1] - nodes[None, :, 1]) ** 2
    )
    if d2 < min_dist**2:
        raise ValueError(
            f"field point within {math.sqrt(d2):.3e} of a boundary node "
            f"(closer than {min_dist:.3e}); trapezoidal evaluation loses accuracy"
        )


def _eval_layers(kernel, densities, x, eval_nodes, interp, min_node_distance, grad):
    if isinstance(densities, DensitySolution):
        densities = [densities]
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(x))
    out = np.zeros((len(pts), 2)) if grad else np.zeros(len(pts))
    for dens in densities:
        nodes, wmu, width = resample_density(dens, eval_nodes, interp)
        _check_distance(pts, nodes, width if min_node_distance is None else min_node_distance)
        if grad:
            out += kernel.single_layer_grad(pts, nodes, wmu)
        else:
            out += kernel.single_layer(pts, nodes, wmu)
    return out[0] if single else out


def eval_potential(kernel, density, x, eval_nodes=None, interp="trig", min_node_distance=None):
    """Single-layer potential at field points x.

    density may be one DensitySolution or a list (whole-boundary splits).
    eval_nodes refines the quadrature by interpolating the density onto a
    finer grid of the exact curve, which keeps near-boundary evaluation
    accurate on coarse meshes. Points closer to the evaluation nodes than
    min_node_distance (default: one physical mesh width) raise.
    """
    return _eval_layers(kernel, density, x, eval_nodes, interp, min_node_distance, grad=False)


def eval_potential_gradient(
    kernel, density, x, eval_nodes=None, interp="trig", min_node_distance=None
):
    return _eval_layers(kernel, density, x, eval_nodes, interp, min_node_distance, grad=True)
