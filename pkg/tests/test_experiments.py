"""The two studies: reference-domain solution, trace data, the contour
functional and kernel-path agreement."""

import math

import numpy as np
import pytest

from greenpot import bie, experiments as ex, mlmc
from greenpot.geometry import Circle, stream_for
from greenpot.kernels import BoundaryCondition, RectangleKernel, neumann

TWO_PI = 2 * math.pi


class TestReferenceSolution:
    def test_vanishes_on_square_sides(self):
        s = np.linspace(0, 1, 11)
        for pts in (
            np.column_stack([s, np.zeros_like(s)]),
            np.column_stack([s, np.ones_like(s)]),
            np.column_stack([np.zeros_like(s), s]),
            np.column_stack([np.ones_like(s), s]),
        ):
            np.testing.assert_allclose(ex.deterministic_u1(pts), 0.0, atol=1e-13)

    def test_center_value(self):
        # only the (1, 1) mode survives the even-index weights
        got = ex.deterministic_u1(np.array([0.5, 0.5]))
        assert got == pytest.approx(100.0 / (2 * math.pi**4), rel=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.1, 0.9, (20, 2))
        g = ex.u1_gradient(pts)
        step = 1e-7
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            fd = (ex.deterministic_u1(pts + e) - ex.deterministic_u1(pts - e)) / (2 * step)
            np.testing.assert_allclose(g[:, k], fd, rtol=1e-6)

    def test_laplacian_matches_series_forcing(self):
        # -lap u1 = 100 sum w (n^2 + m^2) pi^2 sin sin, term by term; the
        # discrete 5-point Laplacian must approach the symbolic value
        rng = np.random.default_rng(1)
        pts = rng.uniform(0.2, 0.8, (5, 2))

        def forcing(p):
            x, y = p[..., 0], p[..., 1]
            out = np.zeros_like(x)
            for n in (1, 2):
                for m in (1, 2):
                    w = (math.sin(n * math.pi / 2) ** 2 * math.sin(m * math.pi / 2) ** 2) / (
                        n * m * math.pi**4 * (n**2 + m**2)
                    )
                    out += (
                        100.0 * w * (n**2 + m**2) * math.pi**2
                        * np.sin(n * math.pi * x) * np.sin(m * math.pi * y)
                    )
            return out

        h = 1e-4
        for p in pts:
            stencil = p + h * np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]])
            u = ex.deterministic_u1(stencil)
            lap = (u[1:].sum() - 4 * u[0]) / h**2
            assert -lap == pytest.approx(forcing(p), rel=1e-6)


class TestTraceData:
    def test_consistent_data_gives_zero(self):
        bc = BoundaryCondition(
            2.0,
            0.5,
            rhs=lambda p, n: 2.0 * ex.deterministic_u1(p)
            + 0.5 * np.sum(ex.u1_gradient(p) * n, axis=1),
        )
        phi = ex.trace_data(ex.deterministic_u1, ex.u1_gradient, bc)
        b = bie.DiscretizedBoundary(Circle((0.3, 0.4), 0.15), 16)
        np.testing.assert_allclose(phi(b.nodes, b.normals), 0.0, atol=1e-14)

    def test_homogeneous_neumann_is_negative_normal_derivative(self):
        phi = ex.trace_data(ex.deterministic_u1, ex.u1_gradient, neumann())
        b = bie.DiscretizedBoundary(Circle((0.3, 0.4), 0.15), 16)
        want = -np.sum(ex.u1_gradient(b.nodes) * b.normals, axis=1)
        np.testing.assert_allclose(phi(b.nodes, b.normals), want, atol=1e-15)

    def test_superposition_with_consistent_data(self):
        # phi == 0 forces u2 == 0, so the total field equals u1
        bc = BoundaryCondition(1.0, 0.0, rhs=lambda p, n: ex.deterministic_u1(p))
        phi = ex.trace_data(ex.deterministic_u1, ex.u1_gradient, bc)
        curve = ex.example1_aperture()
        b = bie.DiscretizedBoundary(curve, 64)
        system = bie.assemble_system(RectangleKernel(1.0, 1.0), b, bc, phi)
        mu = bie.solve_density(system)
        np.testing.assert_allclose(mu.mu, 0.0, atol=1e-10)


class TestFunctional:
    def test_constant_field(self):
        spec = ex.FunctionalSpec(offset=0.01, contour_points=128)
        got = ex.functional_eval(spec, lambda p: np.full(len(p), 3.25), Circle((0.3, 0.4), 0.15))
        assert got == 3.25

    def test_point_value(self):
        spec = ex.FunctionalSpec(kind="point_value", point=(0.25, 0.5))
        assert ex.functional_eval(spec, lambda p: p[:, 0] + p[:, 1]) == pytest.approx(0.75)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ex.FunctionalSpec(kind="nope")
        with pytest.raises(ValueError):
            ex.FunctionalSpec(offset=-1.0)

    def test_contour_refinement_self_consistency(self):
        # doubling the contour sampling barely moves the supremum
        prob = ex.AperturePotentialProblem("analytical")
        curve = prob.draw(stream_for(3, 0, 1).generator())
        hier = mlmc.LevelHierarchy(h0=1 / 32)
        values = {}
        for m in (256, 512):
            p = ex.AperturePotentialProblem(
                "analytical", functional=ex.FunctionalSpec(offset=0.01, contour_points=m)
            )
            values[m], _ = p.level_value(curve, hier, 2)
        assert abs(values[512] - values[256]) < 5e-5

    def test_mask_is_level_independent(self):
        prob = ex.AperturePotentialProblem("analytical")
        curve = prob.draw(stream_for(0, 0, 0).generator())
        b1 = ex.contour_bundle(curve, prob.functional)
        b2 = ex.contour_bundle(curve, prob.functional)
        assert b1 is b2  # cached on the realization

    def test_functional_spread_across_realizations(self):
        prob = ex.AperturePotentialProblem("analytical")
        hier = mlmc.LevelHierarchy(h0=1 / 32)
        vals = []
        for k in range(200):
            curve = prob.draw(stream_for(17, 0, k).generator())
            f, _ = prob.level_value(curve, hier, 0)
            vals.append(f)
        vals = np.asarray(vals)
        assert np.all(np.isfinite(vals))
        assert np.var(vals) > 1e-5


class TestProblemPaths:
    def test_kernel_paths_agree_on_one_realization(self):
        hier = mlmc.LevelHierarchy(h0=1 / 32)
        curve = ex.AperturePotentialProblem("analytical").draw(stream_for(2, 0, 4).generator())
        fine, coarse = {}, {}
        for path in ex.KERNEL_CHOICES:
            prob = ex.AperturePotentialProblem(path)
            fine[path], _ = prob.level_value(curve, hier, 3)
            coarse[path], _ = prob.level_value(curve, hier, 2)
        disc = max(abs(fine[p] - coarse[p]) for p in ex.KERNEL_CHOICES)
        for a in ex.KERNEL_CHOICES:
            for b in ex.KERNEL_CHOICES:
                assert abs(fine[a] - fine[b]) <= 5 * max(disc, 1e-6)

    def test_split_functional_matches_dense(self):
        prob = ex.AperturePotentialProblem("analytical")
        curve = prob.draw(stream_for(0, 0, 5).generator())
        hier = mlmc.LevelHierarchy(h0=1 / 32)
        n2 = hier.n_nodes(1)
        b = bie.DiscretizedBoundary(curve, n2, side="exterior")
        dens = bie.solve_density(
            bie.assemble_system(prob._rect, b, neumann(), prob._phi)
        )
        m_eval = prob._eval_nodes(n2)
        split = prob._sup_functional_split(curve, dens, m_eval)
        pts = ex.contour_sample_points(curve, prob.functional)
        u2 = bie.eval_potential(prob._rect, dens, pts, eval_nodes=m_eval, min_node_distance=0.0)
        dense = float(np.max(ex.deterministic_u1(pts) + u2))
        assert split == pytest.approx(dense, abs=5e-5)

    def test_draw_rejects_inadmissible_geometry(self):
        # a model certain to leave the square triggers the redraw cap
        bad = ex.RandomApertureModel((0.5, 0.5), 0.0, 0.0, 0.6, 0.0, 0)
        prob_bad = ex.AperturePotentialProblem(
            "analytical", model=bad, functional=ex.FunctionalSpec(offset=0.05)
        )
        with pytest.raises(RuntimeError, match="admissible"):
            prob_bad.draw(stream_for(0, 0, 0).generator())

    def test_cost_model_structure(self):
        w = RectangleKernel(1.0, 1.0).eval_weight
        ana = ex.solve_cost_model("analytical", 0, 64, w)
        num = ex.solve_cost_model("numerical", 272, 64, w)
        sch = ex.solve_cost_model("schur", 272, 64, w)
        assert ana < num < sch
        with pytest.raises(ValueError):
            ex.solve_cost_model("other", 1, 1, w)

    def test_n1_pairing(self):
        assert ex.n1_for(8) % 4 == 0
        assert ex.n1_for(64) == 272
        # roughly matched physical mesh widths
        assert 3.5 <= ex.n1_for(128) / 128 <= 5.0

    def test_cost_growth_exponent_ordering(self):
        # fitted growth of the per-sample model cost across the study
        # levels: the closed-form kernel path grows slowest; the reduced
        # whole-boundary path adds only lower-order work to the
        # precomputed-kernel path, so those two exponents nearly coincide
        hier = mlmc.LevelHierarchy(h0=1 / 8)
        w = RectangleKernel(1.0, 1.0).eval_weight
        rho = {}
        for path in ex.KERNEL_CHOICES:
            c = [
                ex.solve_cost_model(
                    path,
                    0 if path == "analytical" else ex.n1_for(hier.n_nodes(l)),
                    hier.n_nodes(l),
                    w,
                )
                for l in range(5)
            ]
            rho[path] = np.polyfit(
                [math.log(1 / hier.h(l)) for l in range(5)], np.log(c), 1
            )[0]
        assert rho["analytical"] < rho["numerical"]
        assert rho["analytical"] < rho["schur"]
        assert abs(rho["numerical"] - rho["schur"]) < 0.2


class TestExample1:
    def test_requires_two_meshes(self):
        with pytest.raises(ValueError):
            ex.run_example1("analytical", (8,))

    def test_unknown_kernel(self):
        with pytest.raises(ValueError):
            ex.run_example1("magic", (8, 16))

    def test_first_row_has_no_rate(self):
        res = ex.run_example1("analytical", (8, 16))
        assert math.isnan(res.rates_mu[0])
        assert res.rates_mu[1] == pytest.approx(
            math.log2(res.rows[0].err_mu / res.rows[1].err_mu)
        )

    def test_rates_recomputable_from_errors(self):
        res = ex.run_example1("analytical", (8, 16, 32))
        for col, rates in (
            ("err_mu", res.rates_mu),
            ("err_u", res.rates_u),
            ("err_h1", res.rates_h1),
        ):
            errs = [getattr(r, col) for r in res.rows]
            recomputed = [math.log(a / b) / math.log(2.0) for a, b in zip(errs, errs[1:])]
            np.testing.assert_allclose(rates[1:], recomputed, rtol=1e-12)


class TestExample2:
    def test_rates_shape_and_content(self):
        res = ex.run_example2("numerical", levels=3, pilot=8, seed=0)
        assert len(res.level_stats) == 4
        assert np.isfinite(res.alpha_hat) and np.isfinite(res.beta_hat)
        assert res.level_stats[0]["n2"] == 8
        assert res.level_stats[0]["n1"] == ex.n1_for(8)
        assert not res.eps_costs

    def test_cost_breakdown(self):
        rows = ex.cost_breakdown("analytical", (8, 16, 32))
        assert [r["n2"] for r in rows] == [8, 16, 32]
        assert all(r["seconds_assemble"] >= 0 and r["seconds_solve"] >= 0 for r in rows)
        assert rows[-1]["cost_model"] > rows[0]["cost_model"]
