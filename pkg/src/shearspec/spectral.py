"""Grids, transforms, Fourier multipliers, projections, and norms on the 2-torus.

Everything downstream works on the fixed 2π-periodic torus T² = [−π, π)², so
all wavenumbers are integers and every operator of interest — the fractional
Laplacian Λ^α = (−Δ)^{α/2}, derivatives, the inverse Laplacian — is a diagonal
Fourier multiplier.  Fields are stored as arrays of *true* Fourier
coefficients n̂(k, l) (forward transform divides by the number of samples), in
numpy FFT frequency order, axis 0 carrying the x-wavenumber k and axis 1 the
y-wavenumber l.

Collocation nodes start at −π rather than 0, which introduces the alternating
phase (−1)^{k+l} relative to numpy's origin-at-zero FFT convention; the phase
is applied symmetrically in both transform directions so coefficients always
mean what they say.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TorusGrid",
    "SpectralField2D",
    "SpectralField1D",
    "Multiplier",
    "to_physical",
    "from_physical",
    "to_physical_1d",
    "from_physical_1d",
    "frac_laplacian",
    "frac_laplacian_1d",
    "lambda_power",
    "lambda_power_1d",
    "project_zero",
    "project_nonzero",
    "embed_zero_mode",
    "inv_laplacian_meanzero",
    "multiply",
    "multiply_1d",
    "ddx",
    "ddy",
    "ddy_1d",
    "grad",
    "div",
    "dealias",
    "dealias_1d",
    "norms",
    "norms_1d",
    "sobolev_norm",
    "hermitian_defect",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Collocation grid on T² with nx × ny nodes, x_i = −π + 2πi/nx.

    Both extents must be even powers of two, at least 8, so transforms are
    fast and the retained wavenumbers are k ∈ {−nx/2, …, nx/2−1} and
    l ∈ {−ny/2, …, ny/2−1}.
    """

    nx: int
    ny: int

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if not isinstance(n, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {n!r}")
            if n < 8 or n % 2 != 0 or not _is_pow2(int(n)):
                raise ValueError(
                    f"{name} must be an even power of two >= 8, got {n}"
                )

    # ---- cached geometry -------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        """Physical x nodes, −π + 2πi/nx."""
        return -np.pi + 2.0 * np.pi * np.arange(self.nx) / self.nx

    @property
    def y(self) -> np.ndarray:
        return -np.pi + 2.0 * np.pi * np.arange(self.ny) / self.ny

    @property
    def kx(self) -> np.ndarray:
        """Integer x-wavenumbers in FFT order, {0, 1, …, −nx/2, …, −1}."""
        return np.fft.fftfreq(self.nx, d=1.0 / self.nx).astype(np.int64)

    @property
    def ky(self) -> np.ndarray:
        return np.fft.fftfreq(self.ny, d=1.0 / self.ny).astype(np.int64)

    def wavenumber_mesh(self):
        """Broadcastable (k, l) pair: shapes (nx, 1) and (1, ny)."""
        return self.kx[:, None], self.ky[None, :]

    @property
    def cell_area(self) -> float:
        return (2.0 * np.pi / self.nx) * (2.0 * np.pi / self.ny)

    def phase(self) -> np.ndarray:
        """(−1)^{k+l}, the shift between origin-at-zero and origin-at-−π."""
        sx = np.where(self.kx % 2 == 0, 1.0, -1.0)
        sy = np.where(self.ky % 2 == 0, 1.0, -1.0)
        return sx[:, None] * sy[None, :]

    def phase_1d(self) -> np.ndarray:
        return np.where(self.ky % 2 == 0, 1.0, -1.0)


@dataclass
class SpectralField2D:
    """A real scalar field on T² represented by its Fourier coefficients.

    ``coeffs[k, l]`` (FFT index order) is the coefficient of e^{i(kx + ly)}.
    For a real field the array is Hermitian, coeffs(−k,−l) = conj(coeffs(k,l)),
    and coeffs(0,0) is the mean value.
    """

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        expected = (self.grid.nx, self.grid.ny)
        if self.coeffs.shape != expected:
            raise ValueError(
                f"coefficient array has shape {self.coeffs.shape}, "
                f"grid wants {expected}"
            )
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def copy(self) -> "SpectralField2D":
        return SpectralField2D(self.grid, self.coeffs.copy())

    # Small amount of arithmetic sugar: fields form a vector space.
    def __add__(self, other: "SpectralField2D") -> "SpectralField2D":
        _check_same_grid(self, other)
        return SpectralField2D(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField2D") -> "SpectralField2D":
        _check_same_grid(self, other)
        return SpectralField2D(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c) -> "SpectralField2D":
        return SpectralField2D(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField2D":
        return SpectralField2D(self.grid, -self.coeffs)


@dataclass
class SpectralField1D:
    """A real function of y alone, as Fourier coefficients over l."""

    ny: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.ny,):
            raise ValueError(
                f"coefficient array has shape {self.coeffs.shape}, "
                f"expected ({self.ny},)"
            )
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0].real)

    def copy(self) -> "SpectralField1D":
        return SpectralField1D(self.ny, self.coeffs.copy())

    def __add__(self, other: "SpectralField1D") -> "SpectralField1D":
        if other.ny != self.ny:
            raise ValueError("grid size mismatch between 1D fields")
        return SpectralField1D(self.ny, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField1D") -> "SpectralField1D":
        if other.ny != self.ny:
            raise ValueError("grid size mismatch between 1D fields")
        return SpectralField1D(self.ny, self.coeffs - other.coeffs)

    def __mul__(self, c) -> "SpectralField1D":
        return SpectralField1D(self.ny, self.coeffs * c)

    __rmul__ = __mul__


def _check_same_grid(a: SpectralField2D, b: SpectralField2D) -> None:
    if a.grid != b.grid:
        raise ValueError(
            f"fields live on different grids: "
            f"{(a.grid.nx, a.grid.ny)} vs {(b.grid.nx, b.grid.ny)}"
        )


def hermitian_defect(f: SpectralField2D) -> float:
    """Relative departure of the coefficients from Hermitian symmetry.

    Zero (to round-off) for any field representing a real function.  The
    defect is measured against the largest coefficient magnitude so it is
    scale invariant; an identically zero field has defect 0.
    """
    c = f.coeffs
    mirrored = np.conj(c[np.ix_(-np.arange(f.grid.nx) % f.grid.nx,
                                -np.arange(f.grid.ny) % f.grid.ny)])
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(c - mirrored)) / scale)


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------

def to_physical(f: SpectralField2D) -> np.ndarray:
    """Sample the field on the collocation grid (real array, nx × ny)."""
    g = f.grid
    return np.real(np.fft.ifft2(f.coeffs * g.phase()) * (g.nx * g.ny))


def from_physical(grid: TorusGrid, samples: np.ndarray) -> SpectralField2D:
    """Fourier coefficients of real samples given on the collocation grid."""
    samples = np.asarray(samples)
    if samples.shape != (grid.nx, grid.ny):
        raise ValueError(
            f"sample array has shape {samples.shape}, "
            f"grid wants {(grid.nx, grid.ny)}"
        )
    coeffs = np.fft.fft2(samples) / (grid.nx * grid.ny) * grid.phase()
    return SpectralField2D(grid, coeffs)


def to_physical_1d(f: SpectralField1D) -> np.ndarray:
    ph = np.where(np.fft.fftfreq(f.ny, 1.0 / f.ny).astype(np.int64) % 2 == 0,
                  1.0, -1.0)
    return np.real(np.fft.ifft(f.coeffs * ph) * f.ny)


def from_physical_1d(ny: int, samples: np.ndarray) -> SpectralField1D:
    samples = np.asarray(samples)
    if samples.shape != (ny,):
        raise ValueError(f"expected {ny} samples, got shape {samples.shape}")
    ph = np.where(np.fft.fftfreq(ny, 1.0 / ny).astype(np.int64) % 2 == 0,
                  1.0, -1.0)
    return SpectralField1D(ny, np.fft.fft(samples) / ny * ph)


# --------------------------------------------------------------------------
# Multipliers
# --------------------------------------------------------------------------

@dataclass
class Multiplier:
    """A Fourier multiplier: diagonal in the (k, l) basis.

    Composition of multipliers multiplies symbols pointwise, so ``m1 * m2``
    is the multiplier of the composed operator.
    """

    grid: TorusGrid
    symbol: np.ndarray = field(repr=False)

    @classmethod
    def from_symbol(cls, grid: TorusGrid, fn) -> "Multiplier":
        """Evaluate ``fn(k, l)`` on the wavenumber mesh (broadcasting)."""
        k, l = grid.wavenumber_mesh()
        raw = fn(k, l)
        dtype = np.complex128 if np.iscomplexobj(raw) else np.float64
        sym = np.broadcast_to(raw, (grid.nx, grid.ny)).astype(dtype)
        return cls(grid, np.array(sym))

    def apply(self, f: SpectralField2D) -> SpectralField2D:
        if f.grid != self.grid:
            raise ValueError("multiplier and field grids differ")
        return SpectralField2D(self.grid, self.symbol * f.coeffs)

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        if other.grid != self.grid:
            raise ValueError("cannot compose multipliers on different grids")
        return Multiplier(self.grid, self.symbol * other.symbol)


def lambda_power(grid: TorusGrid, s: float) -> Multiplier:
    """Symbol (k² + l²)^{s/2} with the (0,0) mode mapped to 0.

    Negative powers are the mean-zero inverses: Λ^{−s} is defined on
    mean-zero fields only and annihilates the constant mode.
    """
    k, l = grid.wavenumber_mesh()
    ksq = (k * k + l * l).astype(np.float64)
    sym = np.zeros((grid.nx, grid.ny))
    nz = ksq > 0
    sym[nz] = ksq[nz] ** (s / 2.0)
    return Multiplier(grid, sym)


def lambda_power_1d(ny: int, s: float) -> np.ndarray:
    """1D symbol |l|^s over the FFT-ordered l axis, zero at l = 0."""
    l = np.fft.fftfreq(ny, 1.0 / ny).astype(np.int64)
    sym = np.zeros(ny)
    nz = l != 0
    sym[nz] = np.abs(l[nz]).astype(np.float64) ** s
    return sym


def frac_laplacian(f: SpectralField2D, alpha: float) -> SpectralField2D:
    """Fractional Laplacian Λ^α f, symbol (k² + l²)^{α/2}, α ∈ (0, 2]."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    return lambda_power(f.grid, alpha).apply(f)


def frac_laplacian_1d(f: SpectralField1D, alpha: float) -> SpectralField1D:
    """One-dimensional fractional Laplacian (−∂yy)^{α/2}, symbol |l|^α."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    return SpectralField1D(f.ny, lambda_power_1d(f.ny, alpha) * f.coeffs)


# --------------------------------------------------------------------------
# Projections
# --------------------------------------------------------------------------

def project_zero(f: SpectralField2D) -> SpectralField1D:
    """x-average of the field: the k = 0 column, as a function of y."""
    return SpectralField1D(f.grid.ny, f.coeffs[0, :].copy())


def project_nonzero(f: SpectralField2D) -> SpectralField2D:
    """The complement of the x-average: zero out the k = 0 column."""
    c = f.coeffs.copy()
    c[0, :] = 0.0
    return SpectralField2D(f.grid, c)


def embed_zero_mode(f0: SpectralField1D, grid: TorusGrid) -> SpectralField2D:
    """Lift a function of y to T² (constant in x)."""
    if f0.ny != grid.ny:
        raise ValueError(
            f"1D field has ny={f0.ny}, grid wants ny={grid.ny}"
        )
    c = np.zeros((grid.nx, grid.ny), dtype=np.complex128)
    c[0, :] = f0.coeffs
    return SpectralField2D(grid, c)


def inv_laplacian_meanzero(f: SpectralField2D) -> SpectralField2D:
    """(−Δ)⁻¹ acting on the mean-removed field; output has zero mean."""
    k, l = f.grid.wavenumber_mesh()
    ksq = (k * k + l * l).astype(np.float64)
    sym = np.zeros_like(ksq)
    nz = ksq > 0
    sym[nz] = 1.0 / ksq[nz]
    return SpectralField2D(f.grid, sym * f.coeffs)


# --------------------------------------------------------------------------
# Derivatives
# --------------------------------------------------------------------------

def ddx(f: SpectralField2D) -> SpectralField2D:
    k = f.grid.kx[:, None].astype(np.float64)
    return SpectralField2D(f.grid, 1j * k * f.coeffs)


def ddy(f: SpectralField2D) -> SpectralField2D:
    l = f.grid.ky[None, :].astype(np.float64)
    return SpectralField2D(f.grid, 1j * l * f.coeffs)


def ddy_1d(f: SpectralField1D) -> SpectralField1D:
    l = np.fft.fftfreq(f.ny, 1.0 / f.ny)  # already the integer values
    return SpectralField1D(f.ny, 1j * l * f.coeffs)


def grad(f: SpectralField2D):
    """Spectral gradient (∂x f, ∂y f)."""
    return ddx(f), ddy(f)


def div(vx: SpectralField2D, vy: SpectralField2D) -> SpectralField2D:
    """Spectral divergence ∂x vx + ∂y vy."""
    _check_same_grid(vx, vy)
    return ddx(vx) + ddy(vy)


# --------------------------------------------------------------------------
# Pointwise products (pseudo-spectral)
# --------------------------------------------------------------------------

def multiply(f: SpectralField2D, g: SpectralField2D) -> SpectralField2D:
    """Pointwise product formed on the collocation grid.

    For inputs confined to the dealias band the aliasing images land
    entirely outside the band, so ``dealias(multiply(f, g))`` is the exact
    truncated convolution.
    """
    _check_same_grid(f, g)
    return from_physical(f.grid, to_physical(f) * to_physical(g))


def multiply_1d(f: SpectralField1D, g: SpectralField1D) -> SpectralField1D:
    if f.ny != g.ny:
        raise ValueError("grid size mismatch between 1D fields")
    return from_physical_1d(f.ny, to_physical_1d(f) * to_physical_1d(g))


# --------------------------------------------------------------------------
# Dealiasing
# --------------------------------------------------------------------------

def dealias(f: SpectralField2D) -> SpectralField2D:
    """Two-thirds rule: zero every mode with |k| > nx/3 or |l| > ny/3.

    Products of two dealiased fields formed on the collocation grid alias
    only into modes outside the retained band, so dealiasing the product
    recovers the exact truncated convolution.
    """
    g = f.grid
    k, l = g.wavenumber_mesh()
    keep = (np.abs(k) <= g.nx // 3) & (np.abs(l) <= g.ny // 3)
    return SpectralField2D(g, np.where(keep, f.coeffs, 0.0))


def dealias_1d(f: SpectralField1D) -> SpectralField1D:
    l = np.fft.fftfreq(f.ny, 1.0 / f.ny).astype(np.int64)
    keep = np.abs(l) <= f.ny // 3
    return SpectralField1D(f.ny, np.where(keep, f.coeffs, 0.0))


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------

def norms(f: SpectralField2D) -> dict:
    """L¹, L², and L∞ norms of the field.

    L² comes from Parseval with the convention ‖e^{i(kx+ly)}‖ = 2π (the
    square root of the domain area); L¹ and L∞ are evaluated on the
    collocation grid.
    """
    samples = to_physical(f)
    return {
        "L1": float(np.sum(np.abs(samples)) * f.grid.cell_area),
        "L2": float(2.0 * np.pi * np.sqrt(np.sum(np.abs(f.coeffs) ** 2))),
        "Linf": float(np.max(np.abs(samples))),
    }


def norms_1d(f: SpectralField1D) -> dict:
    """Norms of a function of y, over the circle of length 2π."""
    samples = to_physical_1d(f)
    h = 2.0 * np.pi / f.ny
    return {
        "L1": float(np.sum(np.abs(samples)) * h),
        "L2": float(np.sqrt(2.0 * np.pi * np.sum(np.abs(f.coeffs) ** 2))),
        "Linf": float(np.max(np.abs(samples))),
    }


def sobolev_norm(f: SpectralField2D, s: float) -> float:
    """Homogeneous H^s seminorm: 2π·sqrt(Σ' (k²+l²)^s |f̂|²) over (k,l)≠0."""
    k, l = f.grid.wavenumber_mesh()
    ksq = (k * k + l * l).astype(np.float64)
    nz = ksq > 0
    return float(
        2.0 * np.pi
        * np.sqrt(np.sum(ksq[nz] ** s * np.abs(f.coeffs[nz]) ** 2))
    )
