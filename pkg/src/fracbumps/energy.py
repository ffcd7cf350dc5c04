"""Energy functional, potential model, interaction constants, expansion fit.

The functional is I(u) = 1/2 <u,u>_s + 1/2 int u^2 - 1/(p+1) int K |u|^{p+1};
its density gradient is (-Lap)^s u + u - K sign(u) |u|^p.  A `model` of None
means K == 1 throughout.

Interaction integrals between distant bumps are computed from the radial
profile with Gauss-Legendre product quadrature on local disks around each
bump, never from the global FFT grid: at realistic spacings the band-limited
interpolation noise of grid samples exceeds the tail values themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field, gagliardo_norm_sq, integrate
from .groundstate import GroundState, ProblemParams, evaluate_U_radial

__all__ = [
    "PotentialModel",
    "EnergyBreakdown",
    "ExpansionFit",
    "eval_K",
    "potential_on_grid",
    "energy",
    "gradient",
    "interaction_coefficient",
    "interaction_bracket",
    "constant_A",
    "radial_power_integral",
    "ring_energy",
    "fit_expansion",
    "RankDeficientFitError",
]


class RankDeficientFitError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialModel:
    """K(rho) = 1 - a / (1 + rho^2)^{m/2}: smooth, radial, K -> 1 algebraically."""

    amplitude: float
    decay: float
    form: str = "smooth_algebraic"

    def __post_init__(self) -> None:
        if self.form != "smooth_algebraic":
            raise ValueError(f"unknown potential form {self.form!r}")
        if not 0.0 < self.amplitude < 1.0:
            raise ValueError(
                f"amplitude must lie in (0, 1) to keep K positive, got {self.amplitude}"
            )
        if not self.decay > 0:
            raise ValueError(f"decay must be positive, got {self.decay}")


def eval_K(model: PotentialModel | None, rho) -> np.ndarray | float:
    """Potential value(s) at radius rho >= 0; None means K == 1."""
    if model is None:
        return np.ones_like(np.asarray(rho, dtype=np.float64)) if np.ndim(rho) else 1.0
    rho_arr = np.asarray(rho, dtype=np.float64)
    out = 1.0 - model.amplitude / (1.0 + rho_arr**2) ** (model.decay / 2.0)
    return out if np.ndim(rho) else float(out)


def potential_on_grid(model: PotentialModel | None, grid) -> np.ndarray:
    if model is None:
        return np.ones(grid.shape)
    return np.asarray(eval_K(model, grid.radius()))


@dataclass(frozen=True)
class EnergyBreakdown:
    gagliardo_half: float
    mass_half: float
    potential_term: float

    @property
    def total(self) -> float:
        return self.gagliardo_half + self.mass_half - self.potential_term


def energy(u: Field, model: PotentialModel | None, params: ProblemParams) -> EnergyBreakdown:
    u.check_finite()
    p = params.p
    K = potential_on_grid(model, u.grid)
    gag = 0.5 * gagliardo_norm_sq(u, params.s)
    mass = 0.5 * integrate(Field(u.grid, u.values**2))
    pot = integrate(Field(u.grid, K * np.abs(u.values) ** (p + 1.0))) / (p + 1.0)
    return EnergyBreakdown(gagliardo_half=gag, mass_half=mass, potential_term=pot)


def gradient(u: Field, model: PotentialModel | None, params: ProblemParams) -> Field:
    """First variation of the functional as an L^2 density."""
    from .grids import fractional_laplacian

    K = potential_on_grid(model, u.grid)
    nonlin = K * np.sign(u.values) * np.abs(u.values) ** params.p
    out = fractional_laplacian(u, params.s).values + u.values - nonlin
    return Field(u.grid, out)


# -- interaction constants -------------------------------------------------------

def _panels_from_edges(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _knot_panels(gs: GroundState, reach: float, order: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre panels aligned with the profile's interpolation knots.

    The monotone-cubic interpolant is only C^1, so quadrature panels that
    straddle knots lose accuracy; aligning panel edges with the knots makes
    the composite rule effectively exact for the interpolant.  Beyond the
    profile, geometric panels cover the analytic tail up to `reach`.
    """
    knots = gs.profile.radii
    edges = [knots[knots <= reach]]
    last = float(edges[0][-1])
    extra = []
    step = max(0.5, 0.02 * max(last, 1.0))
    while last < reach:
        last = min(last + step, reach)
        extra.append(last)
        step *= 1.5
    if extra:
        edges.append(np.asarray(extra))
    edges_arr = np.unique(np.concatenate(edges))
    if edges_arr[0] > 0.0:
        edges_arr = np.concatenate([[0.0], edges_arr])
    return _panels_from_edges(edges_arr, order)


def _gauss_panels(b: float, order: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [0, b] (generic spacing)."""
    core = min(5.0, b)
    edges = list(np.linspace(0.0, core, max(2, int(core / 0.25) + 1)))
    r = core
    while r < b:
        r = min(1.3 * r, b)
        edges.append(r)
    return _panels_from_edges(np.asarray(edges), order)


def _pair_overlap(gs: GroundState, d: float) -> float:
    """int U(|x|)^p U(|x - d e1|) dx over the plane, by two local disks.

    Disk of radius d/2 around each center in polar coordinates, radial
    panels knot-aligned for the concentrated factor; the far factor is
    smooth across the disk.  The leftover region is O(d^{-(p+1)(N+2s)+N})
    and neglected (bounded separately in interaction_bracket).
    """
    if gs.params.dim != 2:
        raise NotImplementedError("interaction quadrature implemented for dim = 2")
    p = gs.params.p
    half = d / 2.0

    rad, wr = _knot_panels(gs, half)
    th, wt = np.polynomial.legendre.leggauss(96)
    theta = np.pi * (th + 1.0) / 2.0           # [0, pi], symmetric in theta
    wth = wt * (np.pi / 2.0) * 2.0             # both half-planes

    R, T = np.meshgrid(rad, theta, indexing="ij")
    dist_far = np.sqrt(R**2 + d**2 - 2.0 * R * d * np.cos(T))

    u_near = evaluate_U_radial(gs, rad)
    far_vals = evaluate_U_radial(gs, dist_far)
    # disk around the first bump: U^p concentrated, partner evaluated far;
    # disk around the second: roles swap
    integ1 = np.sum((u_near**p * rad * wr)[:, None] * far_vals * wth[None, :])
    integ2 = np.sum((u_near * rad * wr)[:, None] * far_vals**p * wth[None, :])
    return float(integ1 + integ2)


def interaction_coefficient(gs: GroundState, d: float) -> float:
    """d^{N+2s} * int U^p(x) U(x - d e1) dx; stabilizes to the pair constant."""
    if not d > 0:
        raise ValueError(f"separation d must be positive, got {d}")
    prof_reach = gs.profile.radii[-1] + 0.0
    if d / 2.0 > 20.0 * prof_reach:
        raise ValueError(f"separation {d} far exceeds the profile range {prof_reach}")
    return d**gs.params.decay_exponent * _pair_overlap(gs, d)


def interaction_bracket(gs: GroundState, d: float) -> tuple[float, float]:
    """Two-sided bracket [C2, C1] for the scaled pair overlap at separation d.

    Lower bound: each disk contributes at least its near mass times the
    minimum of the far factor on the disk; upper bound: near mass times the
    far maximum plus a tail bound on the leftover region.
    """
    p = gs.params.p
    mu = gs.params.decay_exponent
    half = d / 2.0
    rad, wr = _gauss_panels(half)
    u = evaluate_U_radial(gs, rad)
    mass_up = float(2.0 * np.pi * np.sum(u**p * rad * wr))   # int_{B(0,d/2)} U^p
    mass_u = float(2.0 * np.pi * np.sum(u * rad * wr))       # int_{B(0,d/2)} U

    far_min_1 = float(evaluate_U_radial(gs, np.asarray([1.5 * d]))[0])
    far_max_1 = float(evaluate_U_radial(gs, np.asarray([0.5 * d]))[0])
    far_min_p = far_min_1**p
    far_max_p = far_max_1**p

    lower = d**mu * (mass_up * far_min_1 + mass_u * far_min_p)

    # leftover region: both distances exceed d/2; bound one factor by its
    # tail value there and integrate the other analytically
    c, e = gs.profile.tail_coefficient, gs.profile.tail_exponent
    tail_half = c / half**e
    # int_{|x|>d/2} U^p <= 2 pi c^p int_{d/2}^inf r^{1-pe} dr
    leftover = 2.0 * np.pi * c**p * half ** (2.0 - p * e) / (p * e - 2.0) * tail_half
    upper = d**mu * (mass_up * far_max_1 + mass_u * far_max_p + leftover)
    return lower, upper


def constant_A(gs: GroundState) -> float:
    """Single-bump energy constant (1/2 - 1/(p+1)) int U^{p+1}."""
    p = gs.params.p
    return (0.5 - 1.0 / (p + 1.0)) * gs.nonlinear_mass


def radial_power_integral(gs: GroundState, q: float, r_max: float = 0.0) -> float:
    """2 pi int U(rho)^q rho d rho from the profile (dim = 2)."""
    if gs.params.dim != 2:
        raise NotImplementedError("profile quadrature implemented for dim = 2")
    reach = r_max if r_max > 0 else gs.profile.radii[-1] + 40.0
    rad, wr = _knot_panels(gs, reach)
    u = evaluate_U_radial(gs, rad)
    core = 2.0 * np.pi * float(np.sum(u**q * rad * wr))
    # analytic tail remainder of the algebraic decay law
    c, e = gs.profile.tail_coefficient, gs.profile.tail_exponent
    if q * e > 2.0:
        core += 2.0 * np.pi * c**q * reach ** (2.0 - q * e) / (q * e - 2.0)
    return core


def ring_energy(gs: GroundState, k: int, r: float, model: PotentialModel | None) -> float:
    """I(U_r) for the k-bump ring, evaluated by profile quadrature.

    The quadratic part uses the exact pairing identity of the limit
    equation, <U_r,U_r>_s + int U_r^2 = k (int U^{p+1} + sum_i J(d_i)),
    so no fractional operator has to act on the assembled sum; the
    potential term is a sector quadrature exploiting the exact k-fold
    symmetry.  Free of grid-alignment noise, valid for any radius.
    """
    if gs.params.dim != 2:
        raise NotImplementedError("ring energy implemented for dim = 2")
    if k < 1 or r <= 0:
        raise ValueError("need k >= 1 and r > 0")
    p = gs.params.p
    pair_sum = 0.0
    for i in range(2, k + 1):
        d = 2.0 * r * np.sin((i - 1) * np.pi / k)
        pair_sum += _pair_overlap(gs, d)
    # the dominant single-bump mass comes from the solved field's grid sum
    # (exact samples); interpolant quadrature only enters the small
    # correction terms, where its between-knot error is negligible
    quadratic = k * (gs.nonlinear_mass + pair_sum)
    single_correction = _bump_potential_correction(gs, r, model)
    cross = _sector_potential_integral(gs, k, r, model, subtract_single=True)
    outside = _outside_sector_integral(gs, k, r, model) if k > 1 else 0.0
    potential = k * (gs.nonlinear_mass + single_correction + cross - outside)
    return 0.5 * quadratic - potential / (p + 1.0)


def _bump_potential_correction(gs: GroundState, r: float, model: PotentialModel | None) -> float:
    """int over the plane of (K(|x|) - 1) U(|x - x^1|)^{p+1}, bump-centered polar."""
    if model is None:
        return 0.0
    p = gs.params.p
    reach = gs.profile.radii[-1] + 40.0
    rad, wr = _knot_panels(gs, reach)
    psi, wpsi = _panels_from_edges(np.linspace(0.0, np.pi, 13), 8)
    Rho, Psi = np.meshgrid(rad, psi, indexing="ij")
    origin_dist = np.sqrt(Rho**2 + r**2 + 2.0 * Rho * r * np.cos(Psi))
    Kvals = np.asarray(eval_K(model, origin_dist)) - 1.0
    u = evaluate_U_radial(gs, rad) ** (p + 1.0)
    return 2.0 * float(np.einsum("i,j,ij->", u * rad * wr, wpsi, Kvals))


def _outside_sector_integral(gs: GroundState, k: int, r: float, model: PotentialModel | None) -> float:
    """int over the complement of the first sector of K U_{x^1}^{p+1}.

    Pure tail mass (every point is at least r sin(pi/k) from the center),
    so generic panels suffice.
    """
    p = gs.params.p
    reach = gs.profile.radii[-1] + 40.0 + r
    rho, wrho = _gauss_panels(reach, order=8)
    phi, wphi = _panels_from_edges(np.linspace(np.pi / k, np.pi, 25), 6)
    P, F = np.meshgrid(rho, phi, indexing="ij")
    dist = np.sqrt(P**2 + r**2 - 2.0 * P * r * np.cos(F))
    vals = evaluate_U_radial(gs, dist) ** (p + 1.0)
    Kvals = np.asarray(eval_K(model, P))
    return 2.0 * float(np.einsum("i,j,ij->", rho * wrho, wphi, Kvals * vals))


def _sector_potential_integral(
    gs: GroundState,
    k: int,
    r: float,
    model: PotentialModel | None,
    subtract_single: bool = False,
) -> float:
    """int over one symmetry sector of K(|x|) U_r(x)^{p+1} (polar coordinates).

    With subtract_single=True the single-bump power is removed from the
    integrand, leaving only the cross terms; those carry the interpolation
    kinks at tail magnitude, where the generic panels are accurate enough.
    """
    p = gs.params.p
    if subtract_single and k == 1:
        return 0.0
    centers = np.stack(
        [
            r * np.cos(2.0 * np.pi * np.arange(k) / k),
            r * np.sin(2.0 * np.pi * np.arange(k) / k),
        ],
        axis=1,
    )

    # radial panels: fine across the ring band, geometric elsewhere
    band_lo, band_hi = max(0.0, r - 8.0), r + 8.0
    x, w = np.polynomial.legendre.leggauss(10)
    edges = []
    if band_lo > 0:
        lo_edges = [0.0]
        step = 0.5
        while lo_edges[-1] + step < band_lo:
            lo_edges.append(lo_edges[-1] + step)
            step *= 1.5
        edges.extend(lo_edges)
    edges.append(band_lo)
    edges.extend(np.linspace(band_lo, band_hi, 64)[1:])
    tail_reach = band_hi + 50.0
    offset = 1.0
    while band_hi + offset < tail_reach:
        edges.append(band_hi + offset)
        offset *= 1.6
    edges.append(tail_reach)
    edges_arr = np.unique(np.asarray(edges))
    rho_nodes, rho_w = [], []
    for lo, hi in zip(edges_arr[:-1], edges_arr[1:]):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        rho_nodes.append(mid + half * x)
        rho_w.append(half * w)
    rho = np.concatenate(rho_nodes)
    wrho = np.concatenate(rho_w)

    # angular panels on [0, pi/k], geometric refinement toward the bump axis
    phi_max = np.pi / k
    wa = min(0.25 / max(r, 1.0), phi_max / 4.0)
    phi_edges = [0.0, wa]
    while phi_edges[-1] < phi_max:
        phi_edges.append(min(phi_edges[-1] * 1.8, phi_max))
    phi_nodes, phi_w = [], []
    for lo, hi in zip(phi_edges[:-1], phi_edges[1:]):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        phi_nodes.append(mid + half * x)
        phi_w.append(half * w)
    phi = np.concatenate(phi_nodes)
    wphi = np.concatenate(phi_w)

    P, F = np.meshgrid(rho, phi, indexing="ij")
    X = P * np.cos(F)
    Y = P * np.sin(F)
    total_field = np.zeros_like(P)
    first = None
    for cx, cy in centers:
        dist = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2)
        vals = evaluate_U_radial(gs, dist)
        if first is None:
            first = vals
        total_field += vals
    power = total_field ** (p + 1.0)
    if subtract_single:
        power = power - first ** (p + 1.0)
    integrand = np.asarray(eval_K(model, P)) * power * P
    # integrand is even in phi across the bump axis: double the half-sector
    return 2.0 * float(np.einsum("i,j,ij->", wrho, wphi, integrand))


def fit_expansion(
    samples: list[tuple[int, float, float]],
    m: float,
    params: ProblemParams,
) -> "ExpansionFit":
    """Least squares of I/k against {1, -k^{N+2s}/r^{N+2s}, 1/r^m}.

    samples are (k, r, I_value) triples; needs at least 6 spanning two or
    more k values and three or more r values per k.
    """
    if len(samples) < 6:
        raise ValueError(f"need at least 6 samples, got {len(samples)}")
    ks = sorted({k for k, _, _ in samples})
    if len(ks) < 2:
        raise RankDeficientFitError("samples span a single k; design matrix is rank-deficient")
    mu = params.decay_exponent
    k_arr = np.asarray([s[0] for s in samples], dtype=np.float64)
    r_arr = np.asarray([s[1] for s in samples], dtype=np.float64)
    y = np.asarray([s[2] for s in samples], dtype=np.float64) / k_arr
    X = np.column_stack(
        [np.ones_like(r_arr), -(k_arr**mu) / r_arr**mu, r_arr**-m]
    )
    # column scaling keeps the rank decision honest across magnitudes
    scale = np.linalg.norm(X, axis=0)
    coef, _, rank, _ = np.linalg.lstsq(X / scale, y, rcond=1e-10)
    if rank < 3:
        raise RankDeficientFitError("design matrix is rank-deficient (collinear samples)")
    coef = coef / scale
    resid = X @ coef - y
    rms = float(np.sqrt(np.mean((resid / y) ** 2)))
    return ExpansionFit(
        A_hat=float(coef[0]),
        B0_hat=float(coef[1]),
        B1_hat=float(coef[2]),
        rms_relative_residual=rms,
        samples_used=len(samples),
    )


@dataclass(frozen=True)
class ExpansionFit:
    """Fitted constants of the ring-energy expansion k(A - B0 k^mu/r^mu + B1/r^m)."""

    A_hat: float
    B0_hat: float
    B1_hat: float
    rms_relative_residual: float
    samples_used: int

    def __post_init__(self) -> None:
        if not (self.B0_hat > 0 and self.B1_hat > 0):
            raise ValueError(
                f"expansion constants must be positive (B0={self.B0_hat:.4g}, B1={self.B1_hat:.4g})"
            )
