import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from wavetank.elliptic import (
    EllipticOperator,
    EllipticProblem,
    _pcg,
    decompose_pressure,
    dirichlet_neumann,
    dn_quadratic_form,
    qE_inner_split,
    solve_elliptic,
)
from wavetank.errors import (
    ConfigurationError,
    MetricValidityError,
    SolverFailureError,
)
from wavetank.grid import Field, l2_norm, make_grid
from wavetank.operators import MetricMatrices, dphi_values
from wavetank.surface import (
    boundary_sobolev_norm,
    build_diffeomorphism,
    random_surface,
    surface_from_values,
)
from conftest import analytic_metric, random_valid_metric, smooth_vector


def flat_diffeo(g):
    return build_diffeomorphism(
        surface_from_values(g, np.zeros(g.n_y)), A=1.0, c0=0.5
    )


class TestSolveElliptic:
    def test_separable_oracle_and_order(self):
        errors = []
        for n in (24, 48, 96):
            g = make_grid(n, n, 2.0 * np.pi, 2.0, clustering="uniform")
            d = flat_diffeo(g)
            mm = MetricMatrices(d)
            k = 2
            prob = EllipticProblem(
                metric=mm,
                dirichlet_top=np.cos(k * g.y_nodes),
                bottom_condition="dirichlet_zero",
            )
            q = solve_elliptic(prob, tol=1e-11)
            exact = (
                np.cos(k * g.y_nodes)[:, None]
                * np.sinh(k * (g.z_nodes + g.depth_H))[None, :]
                / np.sinh(k * g.depth_H)
            )
            errors.append(np.max(np.abs(q.values - exact)))
        assert np.log2(errors[0] / errors[1]) > 1.8
        assert np.log2(errors[1] / errors[2]) > 1.8

    def test_zero_data_zero_solution(self, grid, flat_metric):
        mm = MetricMatrices(flat_metric)
        prob = EllipticProblem(metric=mm, dirichlet_top=np.zeros(grid.n_y))
        q = solve_elliptic(prob, tol=1e-11)
        assert np.max(np.abs(q.values)) < 1e-12

    def test_manufactured_curved_metric_order(self):
        # q* with q*(-H) = 0 and arbitrary top trace; rhs from sympy
        y_s, z_s = sympy.symbols("y z")
        delta = 0.12
        eta_s = delta * sympy.cos(y_s) * sympy.exp(2 * z_s)
        c_s = 1 + sympy.diff(eta_s, z_s)
        b_s = sympy.diff(eta_s, y_s)
        H = 2.0 * np.pi
        q_s = sympy.cos(2 * y_s) * sympy.sin(sympy.pi * (z_s + H) / (2 * H))
        E11, E12, E22 = c_s, -b_s, (1 + b_s**2) / c_s
        flux_y = E11 * sympy.diff(q_s, y_s) + E12 * sympy.diff(q_s, z_s)
        flux_z = E12 * sympy.diff(q_s, y_s) + E22 * sympy.diff(q_s, z_s)
        rhs_s = -(sympy.diff(flux_y, y_s) + sympy.diff(flux_z, z_s)) / c_s
        q_fn = sympy.lambdify((y_s, z_s), q_s, "numpy")
        rhs_fn = sympy.lambdify((y_s, z_s), rhs_s, "numpy")

        errors = []
        for n in (32, 64, 128):
            g = make_grid(n, n, 2.0 * np.pi, H, clustering="uniform")
            d = analytic_metric(g, delta=delta)
            mm = MetricMatrices(d)
            Y, Z = g.y_nodes[:, None], g.z_nodes[None, :]
            prob = EllipticProblem(
                metric=mm,
                dirichlet_top=q_fn(Y, Z)[:, -1],
                rhs=rhs_fn(Y, Z) * np.ones(g.shape),
                bottom_condition="dirichlet_zero",
            )
            q = solve_elliptic(prob, tol=1e-11)
            errors.append(l2_norm(g, q.values - q_fn(Y, Z) * np.ones(g.shape)))
        assert np.log2(errors[0] / errors[1]) > 1.8
        assert np.log2(errors[1] / errors[2]) > 1.8

    def test_superposition(self, grid, rng):
        d = random_valid_metric(grid, rng)
        mm = MetricMatrices(d)
        op = EllipticOperator(grid, mm)
        tol = 1e-11
        f1 = np.cos(grid.y_nodes)
        f2 = np.sin(2 * grid.y_nodes)
        a, b = 2.0, -0.7
        q1 = solve_elliptic(EllipticProblem(metric=mm, dirichlet_top=f1), tol, op)
        q2 = solve_elliptic(EllipticProblem(metric=mm, dirichlet_top=f2), tol, op)
        q12 = solve_elliptic(
            EllipticProblem(metric=mm, dirichlet_top=a * f1 + b * f2), tol, op
        )
        gap = np.max(np.abs(q12.values - a * q1.values - b * q2.values))
        assert gap < 50.0 * tol

    def test_maximum_principle(self, rng):
        g = make_grid(32, 40, 2.0 * np.pi, 2.0 * np.pi)
        for seed in range(8):
            d = random_valid_metric(g, np.random.default_rng(seed), amplitude=0.08)
            mm = MetricMatrices(d)
            data = random_surface(g, np.random.default_rng(seed + 100),
                                  amplitude=1.0).h_values
            prob = EllipticProblem(metric=mm, dirichlet_top=data)
            q = solve_elliptic(prob, tol=1e-11)
            assert np.max(np.abs(q.values)) <= np.max(np.abs(data)) + 1e-8

    def test_indefinite_metric_rejected(self, grid, flat_metric):
        mm = MetricMatrices(flat_metric)
        mm.E22 = -np.ones(grid.shape)
        with pytest.raises(MetricValidityError):
            EllipticProblem(metric=mm, dirichlet_top=np.zeros(grid.n_y))

    def test_bad_tolerance_or_bottom(self, grid, flat_metric):
        mm = MetricMatrices(flat_metric)
        with pytest.raises(ConfigurationError):
            EllipticProblem(
                metric=mm,
                dirichlet_top=np.zeros(grid.n_y),
                bottom_condition="robin",
            )
        prob = EllipticProblem(metric=mm, dirichlet_top=np.zeros(grid.n_y))
        with pytest.raises(ConfigurationError):
            solve_elliptic(prob, tol=0.0)

    def test_iteration_budget_enforced(self):
        # a hard SPD system and a tiny budget must fail loudly
        n = 400
        main = 2.0 * np.ones(n)
        off = -1.0 * np.ones(n - 1)
        A = sp.diags([off, main, off], [-1, 0, 1]).tocsr()
        b = np.ones(n)
        with pytest.raises(SolverFailureError) as excinfo:
            _pcg(A, b, np.zeros(n), rtol=1e-14, atol=1e-16, maxiter=3)
        assert excinfo.value.residual is not None
        assert excinfo.value.iterations == 3


class TestDirichletNeumann:
    def test_flat_surface_tanh_oracle(self):
        rel_errors = {}
        for n in (32, 64):
            g = make_grid(n, n, 2.0 * np.pi, 2.0, clustering="uniform")
            d = flat_diffeo(g)
            for k in (1, 2):
                flux = dirichlet_neumann(d, np.cos(k * g.y_nodes), tol=1e-12)
                exact = k * np.tanh(k * g.depth_H) * np.cos(k * g.y_nodes)
                rel_errors[(n, k)] = np.max(np.abs(flux - exact)) / k
        for k in (1, 2):
            assert rel_errors[(64, k)] < rel_errors[(32, k)] / 3.0
            assert rel_errors[(64, k)] < 5e-3

    def test_constant_data_zero_flux(self, uniform_grid):
        d = flat_diffeo(uniform_grid)
        flux = dirichlet_neumann(d, np.ones(uniform_grid.n_y), tol=1e-12)
        assert np.max(np.abs(flux)) < 1e-10

    def test_self_adjointness(self, grid, rng):
        d = random_valid_metric(grid, rng)
        for _ in range(5):
            f = rng.standard_normal(grid.n_y)
            g2 = rng.standard_normal(grid.n_y)
            f -= f.mean()
            g2 -= g2.mean()
            ab = dn_quadratic_form(d, f, g2, tol=1e-13)
            ba = dn_quadratic_form(d, g2, f, tol=1e-13)
            assert abs(ab - ba) < 1e-9 * max(abs(ab), 1.0)

    def test_coercivity_positive_stable(self):
        def measured_c(g, seeds):
            worst = np.inf
            for seed in seeds:
                r = np.random.default_rng(seed)
                h = random_surface(g, r, amplitude=0.06, max_mode=6)
                d = build_diffeomorphism(h, A=None, c0=0.25)
                f = r.standard_normal(g.n_y)
                f -= f.mean()
                quad = dn_quadratic_form(d, f, f, tol=1e-12)
                w1inf = h.max_abs() + float(np.max(np.abs(h.slope())))
                fh = np.fft.rfft(f)
                fh *= g.wavenumbers / np.sqrt(1.0 + g.wavenumbers)
                mult = np.fft.irfft(fh, n=g.n_y)
                denom = (1.0 + w1inf) ** -2 * boundary_sobolev_norm(g, mult, 0.0) ** 2
                worst = min(worst, quad / denom)
            return worst

        g1 = make_grid(32, 40, 2.0 * np.pi, 2.0 * np.pi)
        g2 = make_grid(64, 80, 2.0 * np.pi, 2.0 * np.pi)
        c1 = measured_c(g1, range(15))
        c2 = measured_c(g2, range(15))
        assert c1 > 0 and c2 > 0
        assert 0.8 <= c2 / c1 <= 1.25


class TestPressureDecomposition:
    def test_zero_state_all_zero(self, grid, flat_metric):
        v = Field(grid, np.zeros((2, grid.n_y, grid.n_z)))
        split = decompose_pressure(v, flat_metric, eps=0.1, g=1.0, sigma=1.0)
        for part in (split.qE, split.qNS, split.qS, split.q_total):
            assert np.max(np.abs(part.values)) < 1e-12

    def test_capillary_trace_exact_on_boundary_rows(self, grid, rng):
        from wavetank.elliptic import capillary_trace

        d = random_valid_metric(grid, rng, amplitude=0.06)
        v = smooth_vector(grid, rng, scale=0.1)
        sigma = 0.7
        split = decompose_pressure(v, d, eps=0.0, g=1.0, sigma=sigma)
        expected = capillary_trace(d.h, sigma)
        assert np.max(np.abs(split.qS.values[:, -1] - expected)) < 1e-13
        assert np.max(np.abs(split.qE.values[:, -1] - d.h.h_values)) < 1e-13

    def test_small_amplitude_separable_profiles(self):
        # v = 0, h = a cos(ky): qE ~ g a cos(ky) cosh(k(z+H))/cosh(kH),
        # qS ~ sigma a k^2 cos(ky) times the same bottom-Neumann profile
        g = make_grid(48, 64, 2.0 * np.pi, 2.0, clustering="uniform")
        a, k, grav, sigma = 1e-4, 2, 1.3, 0.8
        h = surface_from_values(g, a * np.cos(k * g.y_nodes))
        d = build_diffeomorphism(h, A=1.0, c0=0.5)
        v = Field(g, np.zeros((2, g.n_y, g.n_z)))
        split = decompose_pressure(v, d, eps=0.0, g=grav, sigma=sigma)
        profile = np.cosh(k * (g.z_nodes + g.depth_H)) / np.cosh(k * g.depth_H)
        mode = np.cos(k * g.y_nodes)[:, None] * profile[None, :]
        qE_exact = grav * a * mode
        qS_exact = sigma * a * k**2 * mode
        scale_E = np.max(np.abs(qE_exact))
        scale_S = np.max(np.abs(qS_exact))
        assert np.max(np.abs(split.qE.values - qE_exact)) / scale_E < 2e-2
        assert np.max(np.abs(split.qS.values - qS_exact)) / scale_S < 2e-2
        assert np.max(np.abs(split.qNS.values)) == 0.0

    def test_superposition_against_combined_solve(self, grid, rng):
        tol = 1e-11
        for seed in range(5):
            r = np.random.default_rng(seed)
            d = random_valid_metric(grid, r, amplitude=0.05)
            v = smooth_vector(grid, r, scale=0.1)
            split = decompose_pressure(v, d, eps=1e-2, g=1.0, sigma=1.0, tol=tol)
            mm = MetricMatrices(d)
            op = EllipticOperator(grid, mm)
            from wavetank.elliptic import (
                advection_term,
                capillary_trace,
                viscous_boundary_trace,
            )

            adv = advection_term(v, d)
            c = mm.dzphi
            b = d.grad_y_phi.values
            combined_top = (
                1.0 * d.h.h_values
                + viscous_boundary_trace(v, d, 1e-2)
                + capillary_trace(d.h, 1.0)
            )
            q_direct, _ = op.solve(
                EllipticProblem(
                    metric=mm,
                    dirichlet_top=combined_top,
                    flux_rhs=(c * adv[0], -b * adv[0] + adv[1]),
                ),
                tol,
            )
            gap = l2_norm(grid, split.q_total.values - q_direct)
            scale = max(l2_norm(grid, q_direct), 1.0)
            assert gap / scale < 10.0 * tol


class TestQEInnerSplit:
    def test_zero_velocity(self, grid, curved_metric):
        v = Field(grid, np.zeros((2, grid.n_y, grid.n_z)))
        qE1, qE2 = qE_inner_split(v, curved_metric, g=1.0)
        assert np.max(np.abs(qE2.values)) < 1e-12
        assert np.max(np.abs(qE1.values[:, -1] - curved_metric.h.h_values)) < 1e-12

    def test_dual_source_assembly_fd_order(self):
        # for solenoidal v the flux-form and Tr((grad v)^2) sources agree
        errors = []
        for n in (32, 64):
            g = make_grid(n, n, 2.0 * np.pi, 2.0 * np.pi, clustering="uniform")
            d = flat_diffeo(g)
            k = 2
            psi = np.cos(k * g.y_nodes)[:, None] * np.exp(
                1.5 * (g.z_nodes + 0.3 * g.z_nodes**2 / g.depth_H)
            )[None, :]
            from wavetank.grid import (
                horizontal_derivative_values,
                vertical_derivative_values,
            )

            v1 = vertical_derivative_values(g, psi)
            v2 = -horizontal_derivative_values(g, psi)
            v = Field(g, np.stack([v1, v2]))
            from wavetank.elliptic import advection_term

            adv = advection_term(v, d)
            div_route = dphi_values(1, adv[0], d) + dphi_values(3, adv[1], d)
            j11 = dphi_values(1, v1, d)
            j12 = dphi_values(1, v2, d)
            j21 = dphi_values(3, v1, d)
            j22 = dphi_values(3, v2, d)
            trace_route = j11**2 + 2.0 * j12 * j21 + j22**2
            band = (g.z_nodes > -g.depth_H + 0.5) & (g.z_nodes < -0.3)
            errors.append(np.max(np.abs((div_route - trace_route)[:, band])))
        assert errors[1] < errors[0] / 2.5

    def test_split_matches_combined_solve(self, grid, rng):
        tol = 1e-11
        d = random_valid_metric(grid, rng, amplitude=0.05)
        v = smooth_vector(grid, rng, scale=0.1)
        qE1, qE2 = qE_inner_split(v, d, g=1.0, tol=tol)
        mm = MetricMatrices(d)
        op = EllipticOperator(grid, mm)
        j11 = dphi_values(1, v.values[0], d)
        j12 = dphi_values(1, v.values[1], d)
        j21 = dphi_values(3, v.values[0], d)
        j22 = dphi_values(3, v.values[1], d)
        source = j11**2 + 2.0 * j12 * j21 + j22**2
        q_direct, _ = op.solve(
            EllipticProblem(
                metric=mm, dirichlet_top=1.0 * d.h.h_values, rhs=source
            ),
            tol,
        )
        gap = l2_norm(grid, qE1.values + qE2.values - q_direct)
        assert gap < 10.0 * tol * max(l2_norm(grid, q_direct), 1.0)
