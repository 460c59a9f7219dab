"""Free-surface state, its mollified interior extension, and the flattening map.

The surface h lives on the periodic boundary.  Its interior extension eta is
built mode by mode as eta_hat(kappa, z) = chi(z * kappa) * h_hat(kappa) with a
compactly supported cutoff chi that equals 1 on [-1, 1].  The flattening map
is phi = A z + eta; its vertical derivative must stay above a positive floor
for the pulled-back operators to make sense.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MetricValidityError
from .grid import (
    Field,
    Grid,
    horizontal_derivative_values,
    vertical_derivative_values,
)


@dataclass(frozen=True, eq=False)
class SurfaceState:
    """Surface elevation samples and their discrete Fourier coefficients."""

    grid: Grid
    h_values: np.ndarray = field(repr=False)
    h_hat: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.h_values, dtype=float)
        if h.shape != (self.grid.n_y,):
            raise ConfigurationError(
                f"surface shape {h.shape} does not match n_y={self.grid.n_y}"
            )
        if not np.all(np.isfinite(h)):
            raise ConfigurationError("surface contains non-finite values")
        object.__setattr__(self, "h_values", h)
        object.__setattr__(self, "h_hat", np.fft.rfft(h))

    def slope(self):
        """d_y h, spectrally."""
        k = self.grid.wavenumbers
        return np.fft.irfft(1j * k * self.h_hat, n=self.grid.n_y)

    def max_abs(self):
        return float(np.max(np.abs(self.h_values)))


def surface_from_values(grid, h_values):
    return SurfaceState(grid=grid, h_values=np.asarray(h_values, float), h_hat=None)


class CutoffSpec:
    """Smooth compactly supported cutoff: 1 on [-1, 1], 0 outside [-2, 2].

    On 1 < |r| < 2 the profile is the C-infinity bump quotient
    chi = 1 / (1 + exp(tau)), tau(s) = 1/(1-s) - 1/s, s = |r| - 1,
    built from the same exponential germ as the classical bump, but with
    every derivative vanishing at both junctions (flat matching to the
    plateaus).  Derivatives to third order are closed-form; the extension
    audits use them to evaluate z-derivatives of eta per mode without
    finite differences.
    """

    support = 2.0

    @staticmethod
    def _logistic_derivs(s):
        tau = 1.0 / (1.0 - s) - 1.0 / s
        t1 = (1.0 - s) ** -2 + s ** -2
        t2 = 2.0 * (1.0 - s) ** -3 - 2.0 * s ** -3
        t3 = 6.0 * (1.0 - s) ** -4 + 6.0 * s ** -4
        with np.errstate(over="ignore"):
            chi = 1.0 / (1.0 + np.exp(np.minimum(tau, 700.0)))
        u = chi * (1.0 - chi)
        d1 = -u * t1
        a2 = (1.0 - 2.0 * chi) * t1 ** 2 - t2
        d2 = u * a2
        a2p = 2.0 * u * t1 ** 3 + 2.0 * (1.0 - 2.0 * chi) * t1 * t2 - t3
        d3 = u * (-(1.0 - 2.0 * chi) * t1 * a2 + a2p)
        return chi, d1, d2, d3

    @classmethod
    def evaluate(cls, r, order=0):
        """chi or its order-th derivative (order <= 3), vectorized in r."""
        if order not in (0, 1, 2, 3):
            raise ConfigurationError(f"cutoff derivative order {order} unsupported")
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        out = np.zeros_like(a)
        if order == 0:
            out[a <= 1.0] = 1.0
        mid = (a > 1.0) & (a < 2.0)
        if np.any(mid):
            s = a[mid] - 1.0
            chi, d1, d2, d3 = cls._logistic_derivs(s)
            if order == 0:
                out[mid] = chi
            elif order == 1:
                out[mid] = d1 * np.sign(r[mid])
            elif order == 2:
                out[mid] = d2
            else:
                out[mid] = d3 * np.sign(r[mid])
        return out


def extension_modes(h: SurfaceState, z_derivative=0, cutoff=CutoffSpec):
    """Per-mode coefficients of d_z^m eta at every vertical node.

    Returns an array of shape (n_modes, n_z): kappa^m chi^(m)(z kappa) h_hat.
    """
    g = h.grid
    kappa = g.wavenumbers
    arg = np.outer(kappa, g.z_nodes)
    prof = cutoff.evaluate(arg, order=z_derivative)
    return (kappa[:, None] ** z_derivative) * prof * h.h_hat[:, None]


def extend_surface(h: SurfaceState, cutoff=CutoffSpec) -> Field:
    """Mollified interior extension eta with eta(., 0) = h."""
    modes = extension_modes(h, z_derivative=0, cutoff=cutoff)
    eta = np.fft.irfft(modes, n=h.grid.n_y, axis=0)
    return Field(h.grid, eta)


@dataclass(frozen=True, eq=False)
class Diffeomorphism:
    """phi = A z + eta and the metric quantities the transformed operators use.

    dzphi and grad_y_phi are produced by the same discrete derivative
    operators used everywhere else, so operator identities that rely on
    equality of mixed partials hold to machine precision.
    """

    grid: Grid
    A: float
    h: SurfaceState
    eta: Field = field(repr=False)
    phi: Field = field(repr=False)
    dzphi: Field = field(repr=False)
    grad_y_phi: Field = field(repr=False)
    c0_observed: float

    @property
    def N_interior(self):
        """Interior normal field (-d_y phi, 1) as a vector Field."""
        g = self.grid
        return Field(
            g, np.stack([-self.grad_y_phi.values, np.ones(g.shape)])
        )

    @property
    def n_boundary(self):
        """Unit outward normal at z = 0, shape (2, n_y)."""
        slope = self.grad_y_phi.values[:, -1]
        mag = np.sqrt(1.0 + slope ** 2)
        return np.stack([-slope / mag, 1.0 / mag])

    @property
    def boundary_N(self):
        """Unnormalized boundary normal (-d_y h, 1), shape (2, n_y)."""
        slope = self.grad_y_phi.values[:, -1]
        return np.stack([-slope, np.ones_like(slope)])


def build_diffeomorphism(h: SurfaceState, A=None, c0=0.5, cutoff=CutoffSpec):
    """Construct the flattening map, failing if min(dz_phi) < c0.

    When A is None it is chosen as max(1, 2 max|d_z eta|) so the map starts
    with margin.
    """
    if c0 <= 0:
        raise ConfigurationError(f"c0 must be positive, got {c0}")
    g = h.grid
    eta = extend_surface(h, cutoff=cutoff)
    dz_eta = vertical_derivative_values(g, eta.values)
    if A is None:
        A = max(1.0, 2.0 * float(np.max(np.abs(dz_eta))))
    if A <= 0:
        raise ConfigurationError(f"extension slope A must be positive, got {A}")
    phi = A * g.z_nodes[None, :] + eta.values
    dzphi = A + dz_eta
    observed = float(np.min(dzphi))
    if observed < c0:
        raise MetricValidityError(
            f"surface too steep: min(dz_phi) = {observed:.6f} < c0 = {c0}",
            observed_min=observed,
        )
    grad_y = horizontal_derivative_values(g, eta.values)
    return Diffeomorphism(
        grid=g,
        A=float(A),
        h=h,
        eta=eta,
        phi=Field(g, phi),
        dzphi=Field(g, dzphi),
        grad_y_phi=Field(g, grad_y),
        c0_observed=observed,
    )


def surface_geometry(h: SurfaceState):
    """Boundary normal, unit normal, and mean curvature of the graph of h.

    Curvature is kappa = d_y( h' / sqrt(1 + h'^2) ), evaluated spectrally.
    """
    u = h.slope()
    N_b = np.stack([-u, np.ones_like(u)])
    mag = np.sqrt(1.0 + u ** 2)
    n_b = N_b / mag
    kappa = horizontal_derivative_values(h.grid, (u / mag)[:, None])[:, 0]
    return N_b, n_b, kappa


def boundary_sobolev_norm(grid, values, s):
    """|f|_{H^s} on the periodic boundary via the (1 + kappa^2)^{s/2} multiplier."""
    v = np.asarray(values, dtype=float)
    fh = np.fft.rfft(v)
    kappa = grid.wavenumbers
    weights = np.full(kappa.shape, 2.0)
    weights[0] = 1.0
    if grid.n_y % 2 == 0:
        weights[-1] = 1.0
    density = weights * (1.0 + kappa ** 2) ** s * np.abs(fh) ** 2
    return float(np.sqrt(np.sum(density) * grid.dy / grid.n_y))


def tangential_sobolev_norm(grid, values, s):
    """H^s_tan norm: Fourier multiplier in y, plain L2 in z, over components."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    kappa = grid.wavenumbers
    weights = np.full(kappa.shape, 2.0)
    weights[0] = 1.0
    if grid.n_y % 2 == 0:
        weights[-1] = 1.0
    mult = weights * (1.0 + kappa ** 2) ** s
    total = 0.0
    for comp in v:
        fh = np.fft.rfft(comp, axis=0)
        density = mult[:, None] * np.abs(fh) ** 2
        total += np.sum(density * grid.quadrature_weights_z[None, :])
    return float(np.sqrt(total * grid.dy / grid.n_y))


def grad_eta_sobolev_norm(h: SurfaceState, s, cutoff=CutoffSpec):
    """H^s(S) norm of grad(eta) via per-mode analytic z-derivatives.

    Sums L2 norms of all mixed derivatives of order <= s applied to both
    components of grad(eta); z-profiles come from the cutoff's closed-form
    derivatives, so no finite differencing enters the audit.
    """
    if s not in (0, 1, 2):
        raise ConfigurationError(f"extension audit supports s in 0..2, got {s}")
    g = h.grid
    kappa = g.wavenumbers
    weights = np.full(kappa.shape, 2.0)
    weights[0] = 1.0
    if g.n_y % 2 == 0:
        weights[-1] = 1.0
    wz = g.quadrature_weights_z
    arg = np.outer(kappa, g.z_nodes)
    profiles = [cutoff.evaluate(arg, order=m) for m in range(s + 2)]
    hh2 = np.abs(h.h_hat) ** 2
    total = 0.0
    for a in range(s + 1):
        for b in range(s + 1 - a):
            # d_y^a d_z^b of (d_y eta): mode amplitude kappa^(a+b+1) chi^(b)
            amp_y = kappa ** (2 * (a + b + 1)) * hh2
            total += np.sum(
                weights[:, None] * amp_y[:, None] * profiles[b] ** 2 * wz[None, :]
            )
            # d_y^a d_z^b of (d_z eta): amplitude kappa^(a+b+1) chi^(b+1)
            total += np.sum(
                weights[:, None] * amp_y[:, None] * profiles[b + 1] ** 2 * wz[None, :]
            )
    return float(np.sqrt(total * g.dy / g.n_y))


def extension_gain_audit(grid, rng, n_samples=20, s_values=(0, 1, 2), decay=2.0):
    """Measured constants of the half-derivative gain of the extension.

    Returns {s: max ratio |grad eta|_{H^s(S)} / |h|_{H^{s+1/2}}} over a
    corpus of random surfaces with |h_hat| ~ kappa^-decay.
    """
    worst = {s: 0.0 for s in s_values}
    for _ in range(n_samples):
        h = random_surface(grid, rng, amplitude=0.2, decay=decay)
        for s in s_values:
            num = grad_eta_sobolev_norm(h, s)
            den = boundary_sobolev_norm(grid, h.h_values, s + 0.5)
            if den > 0:
                worst[s] = max(worst[s], num / den)
    return worst


def random_surface(grid, rng, amplitude=1.0, decay=2.0, max_mode=None):
    """Random real surface with |h_hat(kappa)| ~ kappa^-decay, zero mean."""
    n = grid.n_y
    if max_mode is None:
        max_mode = n // 3
    hat = np.zeros(n // 2 + 1, dtype=complex)
    ks = np.arange(1, max_mode + 1)
    mags = ks.astype(float) ** (-decay)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=ks.size)
    hat[1 : max_mode + 1] = mags * np.exp(1j * phases)
    h = np.fft.irfft(hat, n=n)
    peak = np.max(np.abs(h))
    if peak > 0:
        h *= amplitude / peak
    return surface_from_values(grid, h)
