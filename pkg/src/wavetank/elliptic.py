"""Variable-coefficient elliptic Dirichlet solves and the pressure split.

All solves share one symmetric stiffness matrix per metric (divergence form,
cell-averaged E) and a Jacobi-preconditioned conjugate-gradient loop with a
deterministic iteration budget.  The Dirichlet-Neumann operator is the weak
boundary flux of the same matrix, so its discrete bilinear form is exactly
symmetric.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MetricValidityError, SolverFailureError
from .grid import Field
from .operators import (
    MetricMatrices,
    divergence_form_matrix,
    dual_areas,
    dphi_values,
    flux_load,
    strain_phi,
)
from .surface import surface_geometry


def iteration_budget(grid):
    return int(np.ceil(10.0 * np.sqrt(grid.n_y * grid.n_z)))


def _pcg(A, b, x0, rtol, atol, maxiter):
    """Jacobi-preconditioned conjugate gradients; returns (x, iterations)."""
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverFailureError("non-positive diagonal in SPD solve")
    inv_diag = 1.0 / diag
    x = x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    target = max(atol, rtol * bnorm)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(maxiter):
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, it
        Ap = A @ p
        denom = float(p @ Ap)
        if denom <= 0:
            raise SolverFailureError(
                f"CG breakdown (p.Ap = {denom:.3e})", residual=rnorm, iterations=it
            )
        alpha = rz / denom
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return x, maxiter
    raise SolverFailureError(
        f"CG did not converge in {maxiter} iterations (residual {rnorm:.3e}, "
        f"target {target:.3e})",
        residual=rnorm,
        iterations=maxiter,
    )


@dataclass
class EllipticProblem:
    """One Dirichlet solve: -div(E grad q) = rhs (+ div F), q|top given.

    rhs is the plain source of -Delta_phi q = rhs (it gets weighted by
    dz_phi in the weak load); flux_rhs supplies a right-hand side already in
    divergence form, as (F1, F2) with -div(E grad q) = div F.
    """

    metric: MetricMatrices
    dirichlet_top: np.ndarray
    rhs: np.ndarray = None
    flux_rhs: tuple = None
    bottom_condition: str = "neumann_zero"

    def __post_init__(self):
        if self.bottom_condition not in ("neumann_zero", "dirichlet_zero"):
            raise ConfigurationError(
                f"bottom condition must be neumann_zero or dirichlet_zero, "
                f"got {self.bottom_condition!r}"
            )
        if self.metric.min_eigenvalue() <= 0:
            raise MetricValidityError(
                "coefficient matrix E is not positive definite",
                observed_min=self.metric.min_eigenvalue(),
            )
        for arr in (self.rhs, self.dirichlet_top):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ConfigurationError("elliptic data contains non-finite values")


class EllipticOperator:
    """Assembled stiffness for one metric, reused across several solves."""

    def __init__(self, grid, metric: MetricMatrices):
        self.grid = grid
        self.metric = metric
        self.A = divergence_form_matrix(grid, metric.E11, metric.E12, metric.E22)
        self.dual = dual_areas(grid)
        nz = grid.n_z
        self.top_idx = np.arange(grid.n_y) * nz + (nz - 1)
        self.bottom_idx = np.arange(grid.n_y) * nz
        self._interior_cache = {}

    def _interior(self, bottom_condition):
        key = bottom_condition
        if key not in self._interior_cache:
            n = self.grid.n_y * self.grid.n_z
            mask = np.ones(n, dtype=bool)
            mask[self.top_idx] = False
            if bottom_condition == "dirichlet_zero":
                mask[self.bottom_idx] = False
            free = np.where(mask)[0]
            A_ff = self.A[free][:, free].tocsr()
            A_fd = self.A[free][:, self.top_idx].tocsr()
            self._interior_cache[key] = (free, A_ff, A_fd)
        return self._interior_cache[key]

    def solve(self, problem: EllipticProblem, tol, x0=None):
        """Returns (solution array (n_y, n_z), iterations)."""
        g = self.grid
        n = g.n_y * g.n_z
        load = np.zeros(n)
        if problem.rhs is not None:
            load += (
                np.asarray(problem.rhs, float) * self.metric.dzphi * self.dual
            ).ravel()
        if problem.flux_rhs is not None:
            load += flux_load(g, *problem.flux_rhs)

        free, A_ff, A_fd = self._interior(problem.bottom_condition)
        x = np.zeros(n)
        x[self.top_idx] = problem.dirichlet_top
        b_f = load[free] - A_fd @ problem.dirichlet_top
        x0_f = np.zeros(free.size) if x0 is None else np.ravel(x0)[free]
        sol_f, iters = _pcg(
            A_ff,
            b_f,
            x0_f,
            rtol=tol,
            atol=max(tol * 1e-3, 1e-14),
            maxiter=iteration_budget(g),
        )
        x[free] = sol_f
        return x.reshape(g.shape), iters

    def boundary_flux(self, q_values, load=None):
        """Weak conormal flux at z = 0, divided by dy to give nodal values.

        For a discrete solution of the homogeneous problem this is the
        Dirichlet-Neumann image (grad f)^b . N.
        """
        weak = (self.A @ np.ravel(q_values))[self.top_idx]
        if load is not None:
            weak = weak - np.ravel(load)[self.top_idx]
        return weak / self.grid.dy


def solve_elliptic(problem: EllipticProblem, tol, operator=None, x0=None) -> Field:
    """Solve one EllipticProblem to the given relative tolerance."""
    if tol <= 0:
        raise ConfigurationError(f"tolerance must be positive, got {tol}")
    op = operator or EllipticOperator(problem.metric.grid, problem.metric)
    values, _ = op.solve(problem, tol)
    return Field(op.grid, values)


# ---------------------------------------------------------------------------
# Dirichlet-Neumann operator

def dirichlet_neumann(d, f_b, tol=1e-10, operator=None):
    """G[h] f_b = (grad f)^b . N for the harmonic extension of f_b.

    Harmonic in the physical domain means div(E grad f) = 0 on the strip;
    the conormal flux of that problem at z = 0 is exactly (grad f)^b . N.
    Bottom closure is homogeneous Neumann.
    """
    metric = MetricMatrices(d)
    op = operator or EllipticOperator(d.grid, metric)
    problem = EllipticProblem(metric=metric, dirichlet_top=np.asarray(f_b, float))
    q, _ = op.solve(problem, tol)
    return op.boundary_flux(q)


def dn_quadratic_form(d, f_b, g_b, tol=1e-10, operator=None):
    """(G[h] f, g) over the boundary with the periodic trapezoid rule."""
    flux = dirichlet_neumann(d, f_b, tol=tol, operator=operator)
    return float(np.sum(flux * np.asarray(g_b, float)) * d.grid.dy)


# ---------------------------------------------------------------------------
# Pressure decomposition

@dataclass(frozen=True, eq=False)
class PressureSplit:
    """The three elliptic pressure components and their sum."""

    qE: Field
    qNS: Field
    qS: Field
    q_total: Field = field(repr=False, default=None)
    iterations: int = 0

    def __post_init__(self):
        if self.q_total is None:
            total = self.qE.values + self.qNS.values + self.qS.values
            object.__setattr__(self, "q_total", Field(self.qE.grid, total))


def advection_term(v: Field, d) -> np.ndarray:
    """(v . grad_phi) v, componentwise, shape (2, n_y, n_z)."""
    v1, v2 = v.values[0], v.values[1]
    out = np.empty_like(v.values)
    for k in range(2):
        out[k] = v1 * dphi_values(1, v.values[k], d) + v2 * dphi_values(
            3, v.values[k], d
        )
    return out


def viscous_boundary_trace(v: Field, d, eps):
    """2 eps (S_phi v) n . n at z = 0, the qNS Dirichlet data."""
    s = strain_phi(v, d).values[..., -1]
    n1, n2 = d.n_boundary
    snn = s[0] * n1 ** 2 + 2.0 * s[1] * n1 * n2 + s[2] * n2 ** 2
    return 2.0 * eps * snn


def capillary_trace(h, sigma):
    """-sigma * curvature, the qS Dirichlet data."""
    _, _, kappa = surface_geometry(h)
    return -sigma * kappa


def harmonic_lift(grid, top_data):
    """Mode-wise cutoff extension of boundary data into the interior.

    Used as a deterministic conjugate-gradient starting guess: it is a pure
    function of the data, so reruns and restarts stay bit-identical.
    """
    from .surface import extension_modes, surface_from_values

    lift_surface = surface_from_values(grid, np.asarray(top_data, float))
    modes = extension_modes(lift_surface, z_derivative=0)
    return np.fft.irfft(modes, n=grid.n_y, axis=0)


def decompose_pressure(v: Field, d, eps, g, sigma, tol=1e-10, operator=None):
    """Split q = qE + qNS + qS per the three elliptic problems.

    qE carries the advection source and the gravity trace g*h, qNS the
    viscous normal stress trace, qS the capillary trace.  At eps = 0 the
    qNS solve is skipped.
    """
    if eps < 0:
        raise ConfigurationError(f"viscosity must be >= 0, got {eps}")
    metric = MetricMatrices(d)
    op = operator or EllipticOperator(d.grid, metric)
    grid = d.grid

    adv = advection_term(v, d)
    c = metric.dzphi
    b = d.grad_y_phi.values
    F1 = c * adv[0]
    F2 = -b * adv[0] + adv[1]
    top_E = g * d.h.h_values
    qE, it_E = op.solve(
        EllipticProblem(
            metric=metric,
            dirichlet_top=top_E,
            flux_rhs=(F1, F2),
        ),
        tol,
        x0=harmonic_lift(grid, top_E),
    )

    if eps > 0:
        top_NS = viscous_boundary_trace(v, d, eps)
        qNS, it_NS = op.solve(
            EllipticProblem(metric=metric, dirichlet_top=top_NS),
            tol,
            x0=harmonic_lift(grid, top_NS),
        )
    else:
        qNS = np.zeros(grid.shape)
        it_NS = 0

    top_S = capillary_trace(d.h, sigma)
    qS, it_S = op.solve(
        EllipticProblem(metric=metric, dirichlet_top=top_S),
        tol,
        x0=harmonic_lift(grid, top_S),
    )

    return PressureSplit(
        qE=Field(grid, qE),
        qNS=Field(grid, qNS),
        qS=Field(grid, qS),
        iterations=it_E + it_NS + it_S,
    )


def qE_inner_split(v: Field, d, g, tol=1e-10, operator=None):
    """qE1 harmonic with trace g*h; qE2 zero-trace with the grad v : grad v^T source.

    The source uses the solenoidal cancellation div(v . grad v) =
    grad v : (grad v)^T, assembled as a plain right-hand side.
    """
    metric = MetricMatrices(d)
    op = operator or EllipticOperator(d.grid, metric)
    qE1, _ = op.solve(
        EllipticProblem(metric=metric, dirichlet_top=g * d.h.h_values), tol
    )
    j11 = dphi_values(1, v.values[0], d)
    j12 = dphi_values(1, v.values[1], d)
    j21 = dphi_values(3, v.values[0], d)
    j22 = dphi_values(3, v.values[1], d)
    source = j11 ** 2 + 2.0 * j12 * j21 + j22 ** 2
    qE2, _ = op.solve(
        EllipticProblem(
            metric=metric, dirichlet_top=np.zeros(d.grid.n_y), rhs=source
        ),
        tol,
    )
    return Field(d.grid, qE1), Field(d.grid, qE2)
