"""Ring bump configurations, the dihedral symmetry class, and radius windows.

Centers sit on a ring of radius r in the x1-x2 plane.  The symmetry class
consists of fields invariant under the 2*pi/k rotation of that plane and
even in every remaining coordinate; `symmetrize` averages over the group.
Rotations decompose into an exact quarter-turn lattice permutation plus a
residual angle applied as three FFT shears, so symmetrization is exact for
band-limited content and idempotent to round-off on resolved fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import fft, ifft, fftfreq

from .grids import Field, GridSpec
from .groundstate import GroundState, ProblemParams, evaluate_U_radial

__all__ = [
    "BumpConfiguration",
    "RadiusWindow",
    "ring_centers",
    "pairwise_distance",
    "ring_sum",
    "assemble_sum",
    "symmetrize",
    "rotate_field",
    "admissible_window",
    "balance_radius",
]


@dataclass(frozen=True)
class BumpConfiguration:
    """k bump centers on the ring of radius r (first center on the +x1 axis)."""

    k: int
    r: float
    dim: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.dim < 2:
            raise ValueError(f"ring configurations need dim >= 2, got {self.dim}")

    @property
    def centers(self) -> np.ndarray:
        """(k, dim) array of exact trigonometric centers."""
        angles = 2.0 * np.pi * np.arange(self.k) / self.k
        out = np.zeros((self.k, self.dim))
        out[:, 0] = self.r * np.cos(angles)
        out[:, 1] = self.r * np.sin(angles)
        return out

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.k) / self.k


def ring_centers(k: int, r: float, dim: int) -> BumpConfiguration:
    return BumpConfiguration(k=k, r=r, dim=dim)


def pairwise_distance(config: BumpConfiguration, i: int) -> float:
    """|x^i - x^1| = 2 r sin((i-1) pi / k), with i in 1..k."""
    if not 1 <= i <= config.k:
        raise ValueError(f"i must lie in 1..{config.k}")
    return 2.0 * config.r * float(np.sin((i - 1) * np.pi / config.k))


def ring_sum(eta: float, k: int, r: float) -> float:
    """Exact sum over the ring of inverse distances to the first center."""
    if not eta > 1:
        raise ValueError(f"eta must exceed 1, got {eta}")
    if k < 2:
        raise ValueError(f"ring_sum needs k >= 2, got {k}")
    i = np.arange(2, k + 1)
    d = 2.0 * r * np.sin((i - 1) * np.pi / k)
    return float(np.sum(d**-eta))


def assemble_sum(gs: GroundState, config: BumpConfiguration, grid: GridSpec) -> Field:
    """Ansatz sum of profile-evaluated bumps at the ring centers."""
    if grid.dim != config.dim:
        raise ValueError(f"grid dim {grid.dim} != configuration dim {config.dim}")
    if grid.half_width < 3.0 * config.r:
        raise ValueError(
            f"grid half-width {grid.half_width:g} violates the tail policy (need >= 3r = {3.0 * config.r:g})"
        )
    mesh = grid.meshgrid()
    total = np.zeros(grid.shape)
    for center in config.centers:
        d2 = np.zeros(grid.shape)
        for d in range(grid.dim):
            d2 += (mesh[d] - center[d]) ** 2
        total += evaluate_U_radial(gs, np.sqrt(d2, out=d2))
    return Field(grid, total)


# -- symmetrization ------------------------------------------------------------

@lru_cache(maxsize=16)
def _shear_phases(grid: GridSpec, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Phase tables for the three-shear rotation by `angle` in the x1-x2 plane."""
    n, h = grid.points_per_dim, grid.spacing
    xi = 2.0 * np.pi * fftfreq(n, d=h)
    xi[n // 2] = 0.0  # Nyquist carries no one-sided phase
    x = -grid.half_width + h * np.arange(n)
    a = -np.tan(angle / 2.0)
    b = np.sin(angle)
    # shear along axis0 by a*x2:  exp(-i xi0 (a x2)); shear along axis1 by b*x1
    phase_a = np.exp(-1j * np.outer(xi, a * x))  # (xi0, x2)
    phase_b = np.exp(-1j * np.outer(b * x, xi))  # (x1, xi1)
    return phase_a, phase_b


def _quarter_turns(values: np.ndarray, quarters: int) -> np.ndarray:
    """Exact rotation by quarters * 90 degrees in the x1-x2 plane.

    Coordinates x_j = -L + j h map to index (n - j) mod n under negation,
    an exact permutation because the origin is a sample.
    """
    q = quarters % 4
    out = values
    for _ in range(q):
        # (x1, x2) -> (-x2, x1): out(j1, j2) = in(j2, neg(j1))
        out = np.swapaxes(out, 0, 1)[_neg_index(out.shape[0]), ...]
    return out


@lru_cache(maxsize=8)
def _neg_cache(n: int) -> np.ndarray:
    return (-np.arange(n)) % n


def _neg_index(n: int) -> np.ndarray:
    return _neg_cache(n)


def _rotate_plane(values: np.ndarray, grid: GridSpec, angle: float) -> np.ndarray:
    """Rotate by `angle` = exact quarter turns + residual three-shear rotation."""
    two_pi = 2.0 * np.pi
    angle = angle % two_pi
    quarters = int(np.rint(angle / (np.pi / 2.0)))
    residual = angle - quarters * (np.pi / 2.0)
    out = _quarter_turns(values, quarters)
    if abs(residual) < 1e-15:
        return out
    phase_a, phase_b = _shear_phases(grid, residual)

    def shear0(v: np.ndarray) -> np.ndarray:
        vh = fft(v, axis=0)
        return np.real(ifft(vh * phase_a, axis=0))

    def shear1(v: np.ndarray) -> np.ndarray:
        vh = fft(v, axis=1)
        return np.real(ifft(vh * phase_b, axis=1))

    return shear0(shear1(shear0(out)))


def rotate_field(u: Field, angle: float) -> Field:
    """Rotate the band-limited interpolant in the x1-x2 plane."""
    if u.grid.dim < 2:
        raise ValueError("rotation needs dim >= 2")
    values = u.values
    if u.grid.dim == 2:
        return Field(u.grid, _rotate_plane(values, u.grid, angle))
    n = u.grid.points_per_dim
    flat = values.reshape(n, n, -1)
    out = np.empty_like(flat)
    for j in range(flat.shape[2]):
        out[:, :, j] = _rotate_plane(flat[:, :, j], u.grid, angle)
    return Field(u.grid, out.reshape(values.shape))


def symmetrize(u: Field, k: int) -> Field:
    """Average over the symmetry group: 2*pi/k rotations and even reflections.

    Idempotent to round-off for fields resolved on the grid.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grid = u.grid
    if grid.dim < 2:
        raise ValueError("symmetrization needs dim >= 2")
    # evenness in x_i for i >= 2 first (exact index permutations)
    acc = u.values.copy()
    for axis in range(1, grid.dim):
        idx = [slice(None)] * grid.dim
        idx[axis] = _neg_index(grid.points_per_dim)
        acc = 0.5 * (acc + acc[tuple(idx)])
    if k == 1:
        return Field(grid, acc)
    sym = Field(grid, acc)
    total = np.zeros_like(acc)
    for j in range(k):
        total += rotate_field(sym, 2.0 * np.pi * j / k).values
    return Field(grid, total / k)


# -- admissible radius window ----------------------------------------------------

@dataclass(frozen=True)
class RadiusWindow:
    """Admissible ring radii [lower, upper] for k bumps."""

    k: int
    lower: float
    upper: float
    alpha: float

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ValueError(f"window degenerate: [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, r: float) -> bool:
        return self.lower <= r <= self.upper


def admissible_window(
    k: int,
    B0: float,
    B1: float,
    m: float,
    params: ProblemParams,
    alpha: float,
) -> RadiusWindow:
    """Radius window [(base -/+ alpha)^{1/(N+2s-m)} k^{(N+2s)/(N+2s-m)}].

    base = B0 (N+2s) / (B1 m); the balance radius of the two competing
    energy terms sits at base^{1/(N+2s-m)} k^{(N+2s)/(N+2s-m)}.
    """
    mu = params.decay_exponent  # N + 2s
    if not (mu / (mu + 1.0)) < m < mu:
        raise ValueError(
            f"decay rate m={m} violates the admissible range ({mu / (mu + 1.0):.4g}, {mu:.4g})"
        )
    if B0 <= 0 or B1 <= 0:
        raise ValueError("expansion constants B0, B1 must be positive")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    base = B0 * mu / (B1 * m)
    if base - alpha <= 0:
        raise ValueError(
            f"alpha={alpha:g} too large: window base {base:.6g} - alpha is not positive"
        )
    expo = 1.0 / (mu - m)
    scale = float(k) ** (mu / (mu - m))
    lower = (base - alpha) ** expo * scale
    upper = (base + alpha) ** expo * scale
    if alpha == 0.0:
        # degenerate window collapses to the balance radius itself
        upper = np.nextafter(upper, np.inf)
    return RadiusWindow(k=k, lower=float(lower), upper=float(upper), alpha=alpha)


def balance_radius(k: int, B0: float, B1: float, m: float, params: ProblemParams) -> float:
    """Maximizer (B0 (N+2s) / (B1 m))^{1/(N+2s-m)} k^{(N+2s)/(N+2s-m)} of the model."""
    mu = params.decay_exponent
    base = B0 * mu / (B1 * m)
    return float(base ** (1.0 / (mu - m)) * float(k) ** (mu / (mu - m)))
