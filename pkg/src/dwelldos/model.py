"""Domain types and unit conventions shared by all solvers.

Units: hbar = 1 everywhere.  The continuum backend uses 2m = 1, so
E = k^2 and the group velocity is v = dE/dk = 2k.  The lattice backend
uses hopping t = 1 (bond value -1) and spacing a = 1, so a transverse
mode disperses as E = eps_m - 2 cos k with v = 2 sin k.  Times are in
units of hbar/energy, densities of states in states per unit energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

Array = np.ndarray

HBAR = 1.0
FLUX_FACTOR = 2.0 * np.pi * HBAR  # ratio of unit-amplitude to energy-normalized flux


@dataclass(frozen=True)
class UnitSystem:
    """Tag describing which mass convention a computation uses."""

    hbar: float = HBAR
    mass_convention: str = "continuum"  # "continuum" (2m = 1) or "lattice" (t = a = 1)


CONTINUUM = UnitSystem(mass_convention="continuum")
LATTICE = UnitSystem(mass_convention="lattice")


# ----------------------------------------------------------------------------
# Reproducible PRNG for seeded fixtures
# ----------------------------------------------------------------------------

_XS_MULT = 0x2545F4914F6CDD1D
_MASK64 = (1 << 64) - 1


class Xorshift64Star:
    """xorshift64* generator (shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).

    Used for every seeded builder so fixtures are bit-identical on all
    platforms.  A zero seed is remapped to a fixed nonzero state.
    """

    def __init__(self, seed: int):
        self.state = (seed & _MASK64) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _XS_MULT) & _MASK64

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()


# ----------------------------------------------------------------------------
# 1D layer stacks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    thickness: float
    potential: float


@dataclass(frozen=True)
class LayerStack:
    """Piecewise-constant 1D potential with semi-infinite asymptotic regions.

    The scattering region Omega is exactly the union of the layers,
    occupying [0, L] with L the sum of the thicknesses.
    """

    layers: tuple[Layer, ...]
    v_left: float = 0.0
    v_right: float = 0.0

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValidationError("a stack needs at least one layer")
        for i, layer in enumerate(self.layers):
            if not layer.thickness > 0.0:
                raise ValidationError(
                    f"layer {i}: thickness must be positive, got {layer.thickness}"
                )
            if not np.isfinite(layer.thickness) or not np.isfinite(layer.potential):
                raise ValidationError(f"layer {i}: non-finite layer values")

    @property
    def total_length(self) -> float:
        return float(sum(l.thickness for l in self.layers))

    @property
    def boundaries(self) -> Array:
        """Interface positions x_0 = 0, ..., x_n = L."""
        return np.concatenate(([0.0], np.cumsum([l.thickness for l in self.layers])))

    @property
    def thicknesses(self) -> Array:
        return np.array([l.thickness for l in self.layers])

    @property
    def potentials(self) -> Array:
        return np.array([l.potential for l in self.layers])

    def is_palindromic(self) -> bool:
        """Exact mirror symmetry (a modeling input, so no tolerance)."""
        if self.v_left != self.v_right:
            return False
        return self.layers == tuple(reversed(self.layers))

    def shifted(self, dv: float) -> "LayerStack":
        """Same stack with dv added to every layer potential (Omega only)."""
        return LayerStack(
            layers=tuple(Layer(l.thickness, l.potential + dv) for l in self.layers),
            v_left=self.v_left,
            v_right=self.v_right,
        )


def build_stack(
    layers: Iterable[tuple[float, float] | dict],
    v_left: float = 0.0,
    v_right: float = 0.0,
) -> LayerStack:
    """Build a validated stack from (thickness, potential) pairs or dicts."""
    parsed = []
    for entry in layers:
        if isinstance(entry, dict):
            parsed.append(Layer(float(entry["d"]), float(entry["V"])))
        else:
            d, v = entry
            parsed.append(Layer(float(d), float(v)))
    return LayerStack(layers=tuple(parsed), v_left=float(v_left), v_right=float(v_right))


def free_stack(length: float = 2.0) -> LayerStack:
    return build_stack([(length, 0.0)])


def rectangular_barrier(thickness: float = 1.0, height: float = 1.0) -> LayerStack:
    return build_stack([(thickness, height)])


def double_barrier(
    barrier_thickness: float = 0.5,
    barrier_height: float = 12.0,
    well_width: float = 2.0,
    well_depth: float = 0.0,
) -> LayerStack:
    """Symmetric double barrier: barrier / well / barrier."""
    return build_stack(
        [
            (barrier_thickness, barrier_height),
            (well_width, well_depth),
            (barrier_thickness, barrier_height),
        ]
    )


def random_stack(
    seed: int,
    n_layers: int = 5,
    v_range: tuple[float, float] = (0.0, 2.0),
    d_range: tuple[float, float] = (0.5, 1.5),
    v_left: float = 0.0,
    v_right: float = 0.0,
) -> LayerStack:
    """Seeded random stack; identical on every platform.

    Draws thickness then potential for each layer in order from one
    Xorshift64Star stream.
    """
    if n_layers < 1:
        raise ValidationError("n_layers must be >= 1")
    rng = Xorshift64Star(seed)
    layers = []
    for _ in range(n_layers):
        d = rng.uniform(*d_range)
        v = rng.uniform(*v_range)
        layers.append((d, v))
    return build_stack(layers, v_left=v_left, v_right=v_right)


def palindromic_stack(seed: int, n_half: int = 3, **kwargs) -> LayerStack:
    """Seeded mirror-symmetric stack: half + reversed half."""
    half = random_stack(seed, n_layers=n_half, **kwargs)
    layers = half.layers + tuple(reversed(half.layers))
    return LayerStack(layers=layers, v_left=half.v_left, v_right=half.v_right)


# ----------------------------------------------------------------------------
# Quasi-1D lattices
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeRegion:
    """Rectangular site subset [col_min, col_max] x [row_min, row_max], inclusive."""

    col_min: int
    col_max: int
    row_min: int
    row_max: int

    def __post_init__(self):
        if self.col_min > self.col_max or self.row_min > self.row_max:
            raise ValidationError("empty lattice region")
        if min(self.col_min, self.row_min) < 0:
            raise ValidationError("region indices must be nonnegative")


@dataclass(frozen=True)
class LatticeSystem:
    """Tight-binding scattering region with two semi-infinite leads.

    Device sites live on a width x length grid with on-site energies
    ``onsite[col, row]``; every nearest-neighbor bond carries hopping -1.
    Ideal leads of the same width (zero on-site) attach at columns 0 and
    length - 1.
    """

    width: int
    length: int
    onsite: Array

    def __post_init__(self):
        if self.width < 1 or self.length < 1:
            raise ValidationError("width and length must be >= 1")
        arr = np.asarray(self.onsite, dtype=float)
        if arr.shape != (self.length, self.width):
            raise ValidationError(
                f"onsite must have shape (length, width) = "
                f"({self.length}, {self.width}), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("non-finite on-site energy")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "onsite", arr)

    @property
    def n_sites(self) -> int:
        return self.width * self.length

    def site_index(self, col: int, row: int) -> int:
        return col * self.width + row

    def full_region(self) -> LatticeRegion:
        return LatticeRegion(0, self.length - 1, 0, self.width - 1)

    def region_sites(self, region: LatticeRegion | None = None) -> Array:
        """Flat site indices belonging to Omega (default: whole device)."""
        if region is None:
            return np.arange(self.n_sites)
        if region.col_max >= self.length or region.row_max >= self.width:
            raise ValidationError("region exceeds device bounds")
        cols = np.arange(region.col_min, region.col_max + 1)
        rows = np.arange(region.row_min, region.row_max + 1)
        return (cols[:, None] * self.width + rows[None, :]).ravel()

    def is_palindromic(self) -> bool:
        return bool(np.array_equal(self.onsite, self.onsite[::-1, :]))

    def shifted(self, dv: float, region: LatticeRegion | None = None) -> "LatticeSystem":
        """Same system with dv added on the Omega sites only."""
        arr = np.array(self.onsite, dtype=float)
        flat = arr.reshape(-1)
        flat[self.region_sites(region)] += dv
        return LatticeSystem(self.width, self.length, arr)


def uniform_lattice(width: int, length: int, v: float = 0.0) -> LatticeSystem:
    return LatticeSystem(width, length, np.full((length, width), float(v)))


def random_lattice(
    seed: int,
    width: int,
    length: int,
    v_range: tuple[float, float] = (-0.5, 0.5),
) -> LatticeSystem:
    """Seeded on-site disorder, drawn column by column, row within column."""
    rng = Xorshift64Star(seed)
    arr = np.empty((length, width))
    for c in range(length):
        for r in range(width):
            arr[c, r] = rng.uniform(*v_range)
    return LatticeSystem(width, length, arr)


def barrier_lattice(
    width: int,
    length: int,
    barrier_cols: Sequence[int],
    barrier_height: float,
) -> LatticeSystem:
    """Uniform device with raised on-site energy on selected columns."""
    arr = np.zeros((length, width))
    for c in barrier_cols:
        arr[c, :] = barrier_height
    return LatticeSystem(width, length, arr)


# ----------------------------------------------------------------------------
# Energy grids and spectral weights
# ----------------------------------------------------------------------------

DEFAULT_THRESHOLD_MARGIN = 1e-6


def channel_thresholds(system: LayerStack | LatticeSystem) -> Array:
    """Sorted channel-opening energies.

    Stacks open a channel at each asymptotic potential; lattice leads open
    and close one per transverse mode at the band edges eps_m -+ 2.
    """
    if isinstance(system, LayerStack):
        return np.unique([system.v_left, system.v_right])
    if isinstance(system, LatticeSystem):
        m = np.arange(1, system.width + 1)
        eps = -2.0 * np.cos(m * np.pi / (system.width + 1))
        return np.unique(np.concatenate([eps - 2.0, eps + 2.0]))
    raise ValidationError(f"unsupported system type {type(system).__name__}")


@dataclass(frozen=True)
class EnergyGrid:
    e_min: float
    e_max: float
    count: int
    threshold_margin: float = DEFAULT_THRESHOLD_MARGIN

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise ValidationError("e_min must be < e_max")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.threshold_margin <= 0:
            raise ValidationError("threshold_margin must be positive")

    @property
    def points(self) -> Array:
        if self.count == 1:
            return np.array([self.e_min])
        return np.linspace(self.e_min, self.e_max, self.count)

    def admissible_mask(self, thresholds: Array) -> Array:
        """True where a grid point keeps its distance from every threshold."""
        pts = self.points
        mask = np.ones(pts.shape, dtype=bool)
        for t in np.atleast_1d(thresholds):
            mask &= np.abs(pts - t) > self.threshold_margin
        return mask


@dataclass(frozen=True)
class SpectralWeight:
    """Sampled |alpha(E)|^2 of a wave packet, trapezoid-normalized to one.

    A single sample with weight 1 stands for an exact energy delta.
    """

    energies: Array
    weights: Array

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if e.ndim != 1 or e.shape != w.shape:
            raise ValidationError("energies and weights must be matching 1D arrays")
        if e.size == 0:
            raise ValidationError("empty spectral weight")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("energies must be strictly increasing")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        total = w[0] if e.size == 1 else np.trapezoid(w, e)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(
                f"spectral weight must integrate to 1 within 1e-9, got {total!r}"
            )
        e = e.copy()
        w = w.copy()
        e.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "weights", w)


def gaussian_spectral_weight(
    e0: float, sigma: float, e_min: float, e_max: float, count: int = 801
) -> SpectralWeight:
    """Gaussian |alpha(E)|^2 on a uniform grid, renormalized by trapezoid rule."""
    e = np.linspace(e_min, e_max, count)
    w = np.exp(-0.5 * ((e - e0) / sigma) ** 2)
    w /= np.trapezoid(w, e)
    return SpectralWeight(e, w)
