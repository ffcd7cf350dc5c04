"""Ground state of (-Lap)^s U + U = U^p and its radial profile.

The solver is a Petviashvili-type normalized fixed point.  The computed
field lives on a periodic box, so its far tail carries contributions from
the neighbouring periodic images of the bump; `strip_periodic_images`
removes those with a self-consistently fitted algebraic tail model before
the profile and its decay constant are extracted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .grids import (
    Field,
    GridSpec,
    apply_resolvent,
    derivative,
    fractional_laplacian,
    gagliardo_norm_sq,
    inner,
    integrate,
    norm_l2,
)

__all__ = [
    "ProblemParams",
    "RadialProfile",
    "GroundState",
    "GroundStateError",
    "NonConvergenceError",
    "CollapseError",
    "PositivityLossError",
    "NonRadialFieldError",
    "solve_ground_state",
    "extract_radial_profile",
    "strip_periodic_images",
    "fit_tail",
    "evaluate_U",
    "evaluate_U_radial",
    "evaluate_U_slope",
    "apply_linearization",
    "kernel_residual",
    "pde_residual",
    "save_ground_state",
    "load_ground_state",
]


class GroundStateError(RuntimeError):
    pass


class NonConvergenceError(GroundStateError):
    pass


class CollapseError(GroundStateError):
    pass


class PositivityLossError(GroundStateError):
    pass


class NonRadialFieldError(GroundStateError):
    pass


@dataclass(frozen=True)
class ProblemParams:
    """Dimension, fractional order and nonlinearity exponent."""

    dim: int
    s: float
    p: float

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.dim > 2 * self.s:
            p_max = (self.dim + 2 * self.s) / (self.dim - 2 * self.s)
            if not 1.0 < self.p < p_max:
                raise ValueError(
                    f"p must lie in (1, {p_max:.6g}) for N={self.dim}, s={self.s}; got {self.p}"
                )
        elif not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")

    @property
    def decay_exponent(self) -> float:
        """Algebraic decay rate N + 2s of the ground-state tail."""
        return self.dim + 2.0 * self.s


@dataclass
class RadialProfile:
    """Shell-averaged radial samples plus the fitted algebraic tail."""

    radii: np.ndarray
    values: np.ndarray
    tail_coefficient: float
    tail_exponent: float
    angular_variation: float = 0.0
    strictly_decreasing: bool = True

    def __post_init__(self) -> None:
        self.radii = np.asarray(self.radii, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.radii.shape != self.values.shape:
            raise ValueError("radii and values must have equal length")
        if self.radii.size and not np.all(np.diff(self.radii) > 0):
            raise ValueError("radii must be strictly increasing")

    def handoff_mismatch(self) -> float:
        """Relative gap between the last sample and the tail law there."""
        r_last, v_last = self.radii[-1], self.values[-1]
        tail = self.tail_coefficient / r_last**self.tail_exponent
        return abs(v_last - tail) / abs(tail)


@dataclass
class GroundState:
    """Converged ground state with cached integrals and evaluation profile."""

    params: ProblemParams
    profile: RadialProfile
    mass_sq: float
    nonlinear_mass: float
    peak: float
    residual_norm: float
    gagliardo_sq: float
    field: Field | None = None
    boundary_ratio: float = 0.0
    iterations: int = 0
    _interp: PchipInterpolator | None = dc_field(default=None, repr=False, compare=False)
    _interp_slope: PchipInterpolator | None = dc_field(default=None, repr=False, compare=False)

    def nehari_defect(self) -> float:
        """Relative defect of <U,U>_s + int U^2 = int U^{p+1}."""
        lhs = self.gagliardo_sq + self.mass_sq
        return abs(lhs - self.nonlinear_mass) / abs(self.nonlinear_mass)

    def interpolator(self) -> PchipInterpolator:
        if self._interp is None:
            self._interp = PchipInterpolator(
                self.profile.radii, self.profile.values, extrapolate=False
            )
        return self._interp

    def slope_interpolator(self) -> PchipInterpolator:
        if self._interp_slope is None:
            self._interp_slope = self.interpolator().derivative()
        return self._interp_slope


def _recenter(values: np.ndarray) -> np.ndarray:
    """Roll the global maximum onto the origin sample (index n/2 per axis)."""
    n = values.shape[0]
    peak_idx = np.unravel_index(np.argmax(values), values.shape)
    shifts = [n // 2 - int(i) for i in peak_idx]
    if any(shifts):
        values = np.roll(values, shifts, axis=tuple(range(values.ndim)))
    return values


def pde_residual(u: Field, params: ProblemParams) -> float:
    """Relative L^2 residual of (-Lap)^s u + u - u^p."""
    res = fractional_laplacian(u, params.s).values + u.values - np.abs(u.values) ** params.p * np.sign(u.values)
    return float(np.linalg.norm(res) / np.linalg.norm(u.values))


def solve_ground_state(
    params: ProblemParams,
    grid: GridSpec,
    tol: float = 1e-8,
    max_iters: int = 500,
    seed_width: float = 1.0,
    seed_amplitude: float = 2.0,
) -> GroundState:
    """Petviashvili iteration u <- gamma^beta * Resolvent(u^p).

    gamma = <u, (-Lap)^s u + u> / <u^p, u> and beta = p/(p-1); at the fixed
    point gamma = 1, which independently certifies the Nehari identity.
    """
    if grid.dim != params.dim:
        raise ValueError(f"grid dim {grid.dim} != params dim {params.dim}")
    s, p = params.s, params.p

    r2 = grid.radius() ** 2
    u = Field(grid, seed_amplitude * np.exp(-r2 / (2.0 * seed_width**2)))

    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        lin = fractional_laplacian(u, s).values + u.values
        up = u.values**p
        num = np.sum(u.values * lin)
        den = np.sum(up * u.values)
        if not np.isfinite(den) or abs(den) < 1e-300:
            raise CollapseError(f"iterate collapsed to zero after {it} iterations")
        gamma = num / den
        if gamma <= 0:
            raise PositivityLossError(f"normalization factor turned nonpositive ({gamma:.3e})")
        beta = p / (p - 1.0)
        new_values = gamma**beta * apply_resolvent(Field(grid, up), s).values
        new_values = _recenter(new_values)
        peak = new_values.max()
        if not np.isfinite(peak) or peak < 1e-12:
            raise CollapseError(f"iterate collapsed to zero after {it} iterations")
        delta = np.max(np.abs(new_values - u.values)) / peak
        u = Field(grid, new_values)
        if delta < tol and abs(gamma - 1.0) < 100 * tol:
            converged = True
            break

    residual = pde_residual(u, params)
    if not converged or residual > max(10 * tol, 1e-7):
        raise NonConvergenceError(
            f"no convergence in {max_iters} iterations (last update {delta:.3e}, residual {residual:.3e})"
        )
    if u.values.min() < -1e-10 * u.values.max():
        raise PositivityLossError(
            f"converged field loses positivity (min {u.values.min():.3e})"
        )

    return _package_ground_state(u, params, residual, it)


def _package_ground_state(
    u: Field, params: ProblemParams, residual: float, iterations: int
) -> GroundState:
    grid = u.grid
    s, p = params.s, params.p

    cleaned, profile = strip_periodic_images(u, params)
    mass_sq = integrate(Field(grid, u.values**2))
    nonlinear_mass = integrate(Field(grid, np.abs(u.values) ** (p + 1.0)))
    gag = gagliardo_norm_sq(u, s)

    boundary = max(
        float(np.max(np.abs(np.take(u.values, 0, axis=d)))) for d in range(grid.dim)
    )
    return GroundState(
        params=params,
        profile=profile,
        mass_sq=mass_sq,
        nonlinear_mass=nonlinear_mass,
        peak=float(u.values.max()),
        residual_norm=residual,
        gagliardo_sq=gag,
        field=u,
        boundary_ratio=boundary / float(u.values.max()),
        iterations=iterations,
    )


# -- radial profiles -----------------------------------------------------------

def _shell_bins(grid: GridSpec, r_max: float, linear_up_to: float = 10.0) -> np.ndarray:
    """Bin edges: linear spacing h up to r=10, geometric afterwards."""
    h = grid.spacing
    edges = [0.0]
    r = 0.0
    while r < min(linear_up_to, r_max):
        r += h
        edges.append(r)
    ratio = 1.0 + h / max(linear_up_to, h)
    while r < r_max:
        r *= ratio
        edges.append(r)
    return np.asarray(edges)


def extract_radial_profile(
    u: Field,
    max_radius: float | None = None,
    angular_tol: float = 0.05,
    variation_floor: float = 1e-3,
    exact_up_to: float = 10.0,
) -> RadialProfile:
    """Radius-shell profile about the origin.

    Inside `exact_up_to` every grid radius is its own degenerate shell:
    squared radii are exact integer multiples of h^2, so grouping is exact,
    the shell average carries no binning bias, and the in-shell spread is a
    pure angular-variation measurement.  Beyond that the shells are the
    h-then-geometric bins, quadratically detrended in radius before the
    spread is measured.  Shells whose mean is below
    `variation_floor * max|u|` are too deep in the tail to carry a
    meaningful relative variation and are excluded from the radiality
    check (their values still enter the profile).
    """
    grid = u.grid
    if max_radius is None:
        max_radius = 0.95 * grid.half_width
    h = grid.spacing
    r2_int = np.zeros(grid.shape, dtype=np.int64)
    n = grid.points_per_dim
    j2 = (np.arange(n) - n // 2) ** 2
    for d in range(grid.dim):
        sh = [1] * grid.dim
        sh[d] = n
        r2_int = r2_int + j2.reshape(sh)
    r2_int = r2_int.ravel()
    v = u.values.ravel()

    scale = float(np.max(np.abs(u.values)))
    worst_variation = 0.0
    radii, values = [], []

    # exact-radius groups in the core
    m_cut = int((min(exact_up_to, max_radius) / h) ** 2)
    inner = r2_int <= m_cut
    m_inner = r2_int[inner]
    v_inner = v[inner]
    order = np.argsort(m_inner, kind="stable")
    m_inner, v_inner = m_inner[order], v_inner[order]
    uniq_m, starts = np.unique(m_inner, return_index=True)
    bounds_in = np.append(starts, m_inner.size)
    sums = np.add.reduceat(v_inner, bounds_in[:-1])
    counts = np.diff(bounds_in)
    means = sums / counts
    mins = np.minimum.reduceat(v_inner, bounds_in[:-1])
    maxs = np.maximum.reduceat(v_inner, bounds_in[:-1])
    for m_val, mean, lo_v, hi_v, cnt in zip(uniq_m, means, mins, maxs, counts):
        radii.append(h * float(np.sqrt(m_val)))
        values.append(float(mean))
        if cnt >= 2 and abs(mean) >= variation_floor * scale and scale > 0:
            worst_variation = max(worst_variation, float(hi_v - lo_v) / abs(mean))

    # geometric shells outward
    r = h * np.sqrt(r2_int.astype(np.float64))
    outer = (r2_int > m_cut) & (r <= max_radius)
    r_out, v_out = r[outer], v[outer]
    start_r = h * np.sqrt(m_cut)
    edges = _shell_bins(grid, max_radius)
    edges = edges[edges > start_r]
    idx = np.searchsorted(edges, r_out, side="right")
    order = np.argsort(idx, kind="stable")
    idx, r_out, v_out = idx[order], r_out[order], v_out[order]
    bounds = np.searchsorted(idx, np.arange(len(edges) + 1))
    for b in range(len(edges)):
        lo, hi = bounds[b], bounds[b + 1]
        if hi - lo < 1:
            continue
        rs, vs = r_out[lo:hi], v_out[lo:hi]
        rbar = rs.mean()
        vbar = vs.mean()
        r_span = float(rs.max() - rs.min())
        uniq, inv = np.unique(np.round(rs, 9), return_inverse=True)
        if hi - lo >= 8 and uniq.size >= 4 and r_span > 1e-9 * max(rbar, 1.0):
            t = (rs - rbar) / r_span
            coef = np.polynomial.polynomial.polyfit(t, vs, deg=2)
            vbar = float(coef[0])
            resid = vs - np.polynomial.polynomial.polyval(t, coef)
            spread_abs = float(resid.max() - resid.min())
        else:
            spread_abs = 0.0
            for gidx in range(uniq.size):
                gv = vs[inv == gidx]
                if gv.size >= 2:
                    spread_abs = max(spread_abs, float(gv.max() - gv.min()))
        if abs(vbar) >= variation_floor * scale and scale > 0:
            worst_variation = max(worst_variation, spread_abs / abs(vbar))
        radii.append(float(rbar))
        values.append(float(vbar))

    radii = np.asarray(radii)
    values = np.asarray(values)
    keep = np.concatenate([[True], np.diff(radii) > 1e-12])
    radii, values = radii[keep], values[keep]
    if radii.size < 4:
        raise NonRadialFieldError("too few populated shells for a profile")
    if worst_variation > angular_tol:
        raise NonRadialFieldError(
            f"angular variation {worst_variation:.3f} exceeds {angular_tol:.3f}; field is not radial"
        )

    strictly_decreasing = bool(np.all(np.diff(values) < 1e-12 * max(scale, 1e-300)))
    # provisional tail over the outer half of the sampled range
    r_hi = radii[-1]
    coeff, expo = _fit_tail_arrays(radii, values, (0.5 * r_hi, r_hi))
    return RadialProfile(
        radii=radii,
        values=values,
        tail_coefficient=coeff,
        tail_exponent=expo,
        angular_variation=worst_variation,
        strictly_decreasing=strictly_decreasing,
    )


def _image_model(grid: GridSpec, coeff: float, expo: float) -> np.ndarray:
    """Sum of algebraic-tail images from the (2L Z)^N lattice, origin excluded."""
    L = grid.half_width
    mesh = grid.meshgrid()
    total = np.zeros(grid.shape)
    span = range(-3, 4)
    for offsets in np.ndindex(*([len(span)] * grid.dim)):
        m = tuple(span[o] for o in offsets)
        if all(c == 0 for c in m):
            continue
        d2 = np.zeros(grid.shape)
        for d in range(grid.dim):
            d2 = d2 + (mesh[d] - 2.0 * L * m[d]) ** 2
        total += coeff / (1.0 + d2 ** (expo / 2.0))
    return total


def strip_periodic_images(
    u: Field, params: ProblemParams, passes: int = 4
) -> tuple[Field, RadialProfile]:
    """Remove periodic-image tails and return the cleaned field + profile.

    The algebraic tail makes the raw periodic field plateau near the box
    scale regardless of box size; the image amplitude is fitted
    self-consistently from the corrected product v * r^{N+2s} over a deep
    shell window, converging in a few passes.
    """
    grid = u.grid
    expo = params.decay_exponent
    L = grid.half_width
    coeff = 0.0
    cleaned = u
    profile = None
    for _ in range(passes):
        corr = _image_model(grid, coeff, expo) if coeff else 0.0
        cleaned = Field(grid, u.values - corr)
        profile = extract_radial_profile(cleaned, max_radius=0.72 * L)
        window = (0.35 * L, 0.65 * L)
        mask = (profile.radii >= window[0]) & (profile.radii <= window[1])
        if mask.sum() < 4:
            break
        new_coeff = float(np.median(profile.values[mask] * profile.radii[mask] ** expo))
        if new_coeff <= 0 or not np.isfinite(new_coeff):
            break
        done = abs(new_coeff - coeff) <= 1e-4 * abs(new_coeff)
        coeff = new_coeff
        if done:
            break

    # final profile for evaluation: trimmed before the corner region and
    # re-tagged with the self-consistent tail constant
    profile = extract_radial_profile(cleaned, max_radius=0.6 * L)
    if coeff > 0:
        profile.tail_coefficient = coeff
        profile.tail_exponent = expo
    return cleaned, profile


def _fit_tail_arrays(
    radii: np.ndarray, values: np.ndarray, window: tuple[float, float]
) -> tuple[float, float]:
    lo, hi = window
    mask = (radii >= lo) & (radii <= hi) & (values > 0)
    if mask.sum() <= 3:
        raise ValueError(f"tail window [{lo:g}, {hi:g}] contains {int(mask.sum())} samples (need > 3)")
    slope, icpt = np.polyfit(np.log(radii[mask]), np.log(values[mask]), 1)
    return float(np.exp(icpt)), float(-slope)


def fit_tail(profile: RadialProfile, window: tuple[float, float]) -> tuple[float, float]:
    """Log-log least squares over the window; exponent returned as a decay rate."""
    return _fit_tail_arrays(profile.radii, profile.values, window)


# -- evaluation ----------------------------------------------------------------

def evaluate_U(gs: GroundState, point) -> np.ndarray | float:
    """U at a point: monotone cubic inside the profile, tail law beyond.

    `point` is an N-vector or an (..., N) stack of points.
    """
    pts = np.asarray(point, dtype=np.float64)
    if pts.ndim == 0 or pts.shape[-1] != gs.params.dim:
        raise ValueError(f"expected points with trailing dimension {gs.params.dim}")
    radii = np.sqrt(np.sum(pts**2, axis=-1))
    vals = evaluate_U_radial(gs, np.atleast_1d(radii))
    return float(vals[0]) if radii.ndim == 0 else vals.reshape(radii.shape)


def evaluate_U_radial(gs: GroundState, radii: np.ndarray) -> np.ndarray:
    """U as a function of radius; the workhorse behind evaluate_U / assembly."""
    prof = gs.profile
    r_last = prof.radii[-1]
    out = np.empty_like(radii)
    inside = radii <= r_last
    interp = gs.interpolator()
    out[inside] = interp(np.clip(radii[inside], prof.radii[0], r_last))
    out[~inside] = prof.tail_coefficient / radii[~inside] ** prof.tail_exponent
    return out


def evaluate_U_slope(gs: GroundState, radii) -> np.ndarray:
    """dU/dr at given radii (profile derivative inside, tail law beyond)."""
    r = np.atleast_1d(np.asarray(radii, dtype=np.float64))
    prof = gs.profile
    r_last = prof.radii[-1]
    out = np.empty_like(r)
    inside = r <= r_last
    out[inside] = gs.slope_interpolator()(np.clip(r[inside], prof.radii[0], r_last))
    out[~inside] = (
        -prof.tail_exponent * prof.tail_coefficient / r[~inside] ** (prof.tail_exponent + 1.0)
    )
    return out.reshape(np.shape(radii))


def apply_linearization(gs: GroundState, v: Field) -> Field:
    """L0 v = (-Lap)^s v + v - p U^{p-1} v with the stored solution field."""
    if gs.field is None:
        raise ValueError("ground state carries no field samples")
    params = gs.params
    U = gs.field.values
    out = fractional_laplacian(v, params.s).values + v.values
    out -= params.p * np.abs(U) ** (params.p - 1.0) * v.values
    return Field(v.grid, out)


def kernel_residual(gs: GroundState, axis: int) -> float:
    """Relative size of L0 applied to the translation mode along `axis` (1-based)."""
    if gs.field is None:
        raise ValueError("ground state carries no field samples")
    if not 1 <= axis <= gs.params.dim:
        raise ValueError(f"axis must lie in 1..{gs.params.dim}, got {axis}")
    dU = derivative(gs.field, axis - 1)
    res = apply_linearization(gs, dU)
    return norm_l2(res) / norm_l2(dU)


# -- persistence ---------------------------------------------------------------

def save_ground_state(directory, gs: GroundState) -> None:
    from .grids import write_field

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if gs.field is not None:
        write_field(directory / "ground_state.frbf", gs.field)
    meta = {
        "N": gs.params.dim,
        "s": gs.params.s,
        "p": gs.params.p,
        "peak": gs.peak,
        "mass_sq": gs.mass_sq,
        "nonlinear_mass": gs.nonlinear_mass,
        "gagliardo_sq": gs.gagliardo_sq,
        "tail_coefficient": gs.profile.tail_coefficient,
        "tail_exponent": gs.profile.tail_exponent,
        "residual_norm": gs.residual_norm,
        "boundary_ratio": gs.boundary_ratio,
        "iterations": gs.iterations,
    }
    with open(directory / "ground_state.meta.txt", "w") as fh:
        for key, val in meta.items():
            fh.write(f"{key} = {val!r}\n")
    with open(directory / "profile.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["radius", "value"])
        for r, v in zip(gs.profile.radii, gs.profile.values):
            writer.writerow([repr(r), repr(v)])


def load_ground_state(directory, with_field: bool = True) -> GroundState:
    from .grids import read_field

    directory = Path(directory)
    meta_path = directory / "ground_state.meta.txt"
    if not meta_path.exists():
        raise FileNotFoundError(f"no ground-state metadata at {meta_path}")
    meta: dict[str, float] = {}
    for line in meta_path.read_text().splitlines():
        if "=" not in line:
            continue
        key, _, val = line.partition("=")
        meta[key.strip()] = float(val.strip())
    radii, values = [], []
    with open(directory / "profile.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            radii.append(float(row[0]))
            values.append(float(row[1]))
    params = ProblemParams(dim=int(meta["N"]), s=meta["s"], p=meta["p"])
    profile = RadialProfile(
        radii=np.asarray(radii),
        values=np.asarray(values),
        tail_coefficient=meta["tail_coefficient"],
        tail_exponent=meta["tail_exponent"],
    )
    fld = None
    frbf = directory / "ground_state.frbf"
    if with_field and frbf.exists():
        fld = read_field(frbf)
    return GroundState(
        params=params,
        profile=profile,
        mass_sq=meta["mass_sq"],
        nonlinear_mass=meta["nonlinear_mass"],
        peak=meta["peak"],
        residual_norm=meta["residual_norm"],
        gagliardo_sq=meta["gagliardo_sq"],
        field=fld,
        boundary_ratio=meta.get("boundary_ratio", 0.0),
        iterations=int(meta.get("iterations", 0)),
    )
