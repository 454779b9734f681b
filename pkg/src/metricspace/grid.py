"""Periodic grids on flat tori and the tensor fields that live on them.

Every field stores its components first and the grid axes last, so a
``(0,2)`` tensor on a 2-D grid has ``data.shape == (2, 2, N0, N1)``.
Slot types are recorded in a string of ``'u'`` (contravariant) and ``'d'``
(covariant) characters, slot 0 first.  A derivative slot added by a
covariant derivative is always prepended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "GridError",
    "TensorField",
    "build_grid",
    "partial_derivative",
    "spectral_gradient_data",
    "integrate_density",
    "random_smooth_fields",
    "scalar_field",
    "constant_sym2",
    "flat_metric",
    "min_eigenvalue",
    "check_spd",
]


class GridError(ValueError):
    """Invalid grid parameters or incompatible fields."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice over the torus ``prod_i [0, L_i)``."""

    dim: int
    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of node coordinates, ``indexing='ij'``."""
        axes = [np.arange(N) * h for N, h in zip(self.shape, self.spacing)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumber(self, axis: int, mode: int) -> float:
        """Angular wavenumber of Fourier mode ``mode`` along ``axis``."""
        return 2.0 * math.pi * mode / self.lengths[axis]


def build_grid(dim: int, shape, lengths) -> Grid:
    """Validate and build a :class:`Grid`.

    Examples
    --------
    >>> build_grid(1, [32], [1.0]).spacing
    (0.03125,)
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    shape = tuple(int(N) for N in shape)
    lengths = tuple(float(L) for L in lengths)
    if len(shape) != dim or len(lengths) != dim:
        raise GridError("shape and lengths must have one entry per axis")
    for N in shape:
        if N < 8 or N % 2:
            raise GridError(f"point counts must be even and >= 8, got {N}")
    for L in lengths:
        if not (L > 0 and math.isfinite(L)):
            raise GridError(f"periods must be positive, got {L}")
    return Grid(dim, shape, lengths)


class TensorField:
    """A tensor field of given slot types on a grid.

    Parameters
    ----------
    grid : Grid
    data : array_like, shape ``(n,)*rank + grid.shape``
    slots : str
        One character per slot, ``'u'`` for contravariant and ``'d'`` for
        covariant.  ``''`` is a scalar field.
    """

    __slots__ = ("grid", "data", "slots")
    __array_priority__ = 1000

    def __init__(self, grid: Grid, data, slots: str = ""):
        data = np.asarray(data, dtype=float)
        expected = (grid.dim,) * len(slots) + grid.shape
        if data.shape != expected:
            raise GridError(f"data shape {data.shape} != expected {expected}")
        if set(slots) - {"u", "d"}:
            raise GridError(f"slot types must be 'u' or 'd', got {slots!r}")
        if not np.all(np.isfinite(data)):
            raise FloatingPointError("tensor field has non-finite values")
        self.grid = grid
        self.data = data
        self.slots = slots

    # -- bookkeeping -----------------------------------------------------
    @property
    def rank(self) -> int:
        return len(self.slots)

    @property
    def contravariant_rank(self) -> int:
        return self.slots.count("u")

    @property
    def covariant_rank(self) -> int:
        return self.slots.count("d")

    def like(self, data) -> "TensorField":
        return TensorField(self.grid, data, self.slots)

    def copy(self) -> "TensorField":
        return self.like(self.data.copy())

    def _compatible(self, other: "TensorField") -> None:
        if other.grid != self.grid or other.slots != self.slots:
            raise GridError(
                f"incompatible fields: {self.slots!r} vs {other.slots!r}"
            )

    def sym(self) -> "TensorField":
        """Symmetric part of a rank-2 field."""
        if self.rank != 2:
            raise GridError("sym() needs a rank-2 field")
        return self.like(0.5 * (self.data + self.data.swapaxes(0, 1)))

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, TensorField):
            self._compatible(other)
            return self.like(self.data + other.data)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, TensorField):
            self._compatible(other)
            return self.like(self.data - other.data)
        return NotImplemented

    def __neg__(self):
        return self.like(-self.data)

    def __mul__(self, other):
        if isinstance(other, TensorField):
            # pointwise product with a scalar field
            if other.slots:
                raise GridError("can only multiply by a scalar field")
            return self.like(self.data * other.data)
        return self.like(self.data * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TensorField):
            if other.slots:
                raise GridError("can only divide by a scalar field")
            return self.like(self.data / other.data)
        return self.like(self.data / float(other))

    def __repr__(self) -> str:
        return f"TensorField(slots={self.slots!r}, grid={self.grid.shape})"


def scalar_field(grid: Grid, values) -> TensorField:
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
    return TensorField(grid, values.copy(), "")


def constant_sym2(grid: Grid, matrix) -> TensorField:
    """Spatially constant symmetric ``(0,2)`` field."""
    m = np.asarray(matrix, dtype=float).reshape(grid.dim, grid.dim)
    m = 0.5 * (m + m.T)
    data = np.broadcast_to(m.reshape(m.shape + (1,) * grid.dim),
                           m.shape + grid.shape)
    return TensorField(grid, data.copy(), "dd")


def flat_metric(grid: Grid, scale: float = 1.0) -> TensorField:
    return constant_sym2(grid, scale * np.eye(grid.dim))


def partial_derivative(field: TensorField, axis: int) -> TensorField:
    """Fourth-order central difference along a grid axis, periodic.

    Applied componentwise; the slot types are unchanged.
    """
    grid = field.grid
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for dim {grid.dim}")
    return field.like(_d(field.data, axis + field.rank, grid.spacing[axis]))


def _d(a: np.ndarray, array_axis: int, h: float) -> np.ndarray:
    # pad periodically by two cells, then combine shifted slices
    ax = array_axis % a.ndim
    N = a.shape[ax]
    lead = (slice(None),) * ax
    p = np.concatenate((a[lead + (slice(N - 2, N),)], a,
                        a[lead + (slice(0, 2),)]), axis=ax)

    def sl(k):
        return p[lead + (slice(k, k + N),)]

    # paired differences vanish exactly on constants
    return (8.0 * (sl(3) - sl(1)) + (sl(0) - sl(4))) / (12.0 * h)


def gradient_data(a: np.ndarray, grid: Grid, ncomp_axes: int) -> np.ndarray:
    """Stack of partial derivatives, new derivative axis in front."""
    return np.stack(
        [_d(a, ncomp_axes + k, grid.spacing[k]) for k in range(grid.dim)]
    )


def _d_spectral(a: np.ndarray, array_axis: int, h: float) -> np.ndarray:
    ax = array_axis % a.ndim
    N = a.shape[ax]
    k = 2j * np.pi * np.fft.fftfreq(N, h)
    if N % 2 == 0:
        k[N // 2] = 0.0  # the Nyquist mode has no odd derivative
    shape = [1] * a.ndim
    shape[ax] = N
    return np.fft.ifft(np.fft.fft(a, axis=ax) * k.reshape(shape), axis=ax).real


def spectral_gradient_data(a: np.ndarray, grid: Grid, ncomp_axes: int) -> np.ndarray:
    """As :func:`gradient_data` with Fourier differentiation.

    Exact on trigonometric polynomials below the Nyquist mode and
    spectrally accurate on smooth periodic data.
    """
    return np.stack(
        [_d_spectral(a, ncomp_axes + k, grid.spacing[k]) for k in range(grid.dim)]
    )


def integrate_density(s: TensorField) -> float:
    """Rectangle-rule integral of a scalar density over the torus."""
    if s.slots:
        raise GridError("integrate_density expects a scalar field")
    return float(np.sum(s.data) * s.grid.cell_volume)


def min_eigenvalue(g: TensorField) -> np.ndarray:
    """Pointwise smallest eigenvalue of a symmetric ``(0,2)`` field."""
    d = g.data
    if g.grid.dim == 1:
        return d[0, 0].copy()
    if g.grid.dim == 2:
        mean = 0.5 * (d[0, 0] + d[1, 1])
        return mean - np.hypot(0.5 * (d[0, 0] - d[1, 1]), d[0, 1])
    mats = np.moveaxis(d, (0, 1), (-2, -1))
    return np.linalg.eigvalsh(mats)[..., 0]


def check_spd(g: TensorField, floor: float = 0.0) -> float:
    """Return the minimum eigenvalue, raising if it is not above ``floor``."""
    if g.slots != "dd":
        raise GridError("metric must be a (0,2) field")
    lam = min_eigenvalue(g)
    lo = float(lam.min())
    if not lo > floor:
        where = np.unravel_index(int(np.argmin(lam)), lam.shape)
        raise ValueError(
            f"metric not positive definite: min eigenvalue {lo:.3e} at {where}"
        )
    return lo


def _trig_perturbation(grid: Grid, rng: np.random.Generator, max_mode: int):
    """Random symmetric matrix field built from low Fourier modes."""
    n = grid.dim
    x = grid.coordinates()
    modes = [tuple(k - max_mode for k in m)
             for m in np.ndindex(*[2 * max_mode + 1] * n)]
    modes = [m for m in modes if any(m)]
    out = np.zeros((n, n) + grid.shape)
    for i in range(n):
        for j in range(i, n):
            comp = np.zeros(grid.shape)
            for m in modes:
                phase = sum(grid.wavenumber(a, m[a]) * x[a] for a in range(n))
                a_c, a_s = rng.standard_normal(2)
                comp += a_c * np.cos(phase) + a_s * np.sin(phase)
            comp += rng.standard_normal()
            out[i, j] = comp
            out[j, i] = comp
    return out


def _max_spectral_norm(m: np.ndarray) -> float:
    mats = np.moveaxis(m, (0, 1), (-2, -1))
    return float(np.max(np.abs(np.linalg.eigvalsh(mats))))


def random_smooth_fields(grid: Grid, seed: int, amplitude: float,
                         max_mode: int, zero_mean: bool = False):
    """Deterministic smooth test data ``(g, h)``.

    ``g`` is the flat metric plus a symmetric trigonometric perturbation
    whose pointwise spectral norm peaks at ``amplitude``; ``h`` is an
    independent perturbation with the same normalisation.

    Returns
    -------
    g : TensorField
        SPD ``(0,2)`` field with minimum eigenvalue at least ``1 - amplitude``.
    h : TensorField
        Symmetric ``(0,2)`` field.
    """
    if not 0.0 <= amplitude <= 0.5:
        raise GridError("amplitude must lie in [0, 0.5]")
    if max_mode < 1 or any(max_mode > N // 4 for N in grid.shape):
        raise GridError("max_mode must be in [1, N/4]")
    rng = np.random.default_rng(seed)
    pg = _trig_perturbation(grid, rng, max_mode)
    ph = _trig_perturbation(grid, rng, max_mode)
    if zero_mean:
        ph -= ph.mean(axis=tuple(range(2, 2 + grid.dim)), keepdims=True)
    if amplitude == 0.0:
        pg[...] = 0.0
        ph[...] = 0.0
    else:
        pg *= amplitude / _max_spectral_norm(pg)
        ph *= amplitude / _max_spectral_norm(ph)
    g = flat_metric(grid).data + pg
    g = TensorField(grid, g, "dd")
    lo = float(min_eigenvalue(g).min())
    if lo <= 0.1:
        raise ValueError(f"generated metric too close to degenerate: "
                         f"min eigenvalue {lo:.3e}")
    return g, TensorField(grid, ph, "dd")
