"""The attractive kernel and the right-hand sides it drives.

The aggregation velocity is B(n) = ∇(−Δ)⁻¹(n − n̄), which satisfies
div B = −(n − n̄) identically.  Splitting the density into its x-average n⁰
and the remainder n≠ splits the kernel accordingly:

    B₁(n⁰) = ∂y(−∂yy)⁻¹(n⁰ − n̄)       (a function of y alone)
    B₂(n≠) = ∇(−Δ)⁻¹ n≠                (carries every k ≠ 0 mode)

so that B(n) = B₂(n≠) + (0, B₁(n⁰)) componentwise.

Two independent right-hand-side assemblies are provided: ``nonlinear_rhs``
expands ∇·(n B(n)) directly, while ``mode_rhs_zero``/``mode_rhs_nonzero``
build the x-averaged and fluctuating equations term by term from the split
kernel.  Because both routes form their quadratic terms from dealiased
inputs, they agree to rounding — that agreement is a genuine cross-check of
the mode decomposition, and the tests treat it as such.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    SpectralField1D,
    SpectralField2D,
    TorusGrid,
    ddx,
    ddy,
    ddy_1d,
    dealias,
    dealias_1d,
    div,
    frac_laplacian,
    frac_laplacian_1d,
    from_physical,
    inv_laplacian_meanzero,
    multiply_1d,
    project_nonzero,
    project_zero,
    to_physical,
    to_physical_1d,
)

__all__ = [
    "KernelField",
    "attractive_kernel",
    "kernel_b1",
    "kernel_b2",
    "nonlinear_rhs",
    "mode_rhs_zero",
    "mode_rhs_nonzero",
]


@dataclass
class KernelField:
    """The aggregation velocity of a density field.

    ``bx``/``by`` hold the full vector B(n); ``b1`` is the shear-averaged
    component B₁(n⁰), which coincides with the k = 0 column of ``by``.
    """

    bx: SpectralField2D
    by: SpectralField2D
    b1: SpectralField1D


def attractive_kernel(n: SpectralField2D) -> KernelField:
    """B(n) = ∇(−Δ)⁻¹(n − n̄); satisfies div B = −(n − n̄) exactly."""
    phi = inv_laplacian_meanzero(n)
    bx = ddx(phi)
    by = ddy(phi)
    return KernelField(bx=bx, by=by, b1=project_zero(by))


def kernel_b1(n0: SpectralField1D) -> SpectralField1D:
    """B₁(n⁰) = ∂y(−∂yy)⁻¹(n⁰ − n̄): coefficient i·n̂⁰(l)/l for l ≠ 0."""
    l = np.fft.fftfreq(n0.ny, 1.0 / n0.ny).astype(np.int64)
    out = np.zeros(n0.ny, dtype=np.complex128)
    nz = l != 0
    out[nz] = 1j * n0.coeffs[nz] / l[nz]
    return SpectralField1D(n0.ny, out)


def kernel_b2(nneq: SpectralField2D):
    """B₂(n≠) = ∇(−Δ)⁻¹ n≠ for a field with no x-average.

    The split kernel is only defined on the image of the fluctuation
    projection, so genuine k = 0 content is a caller error.  Content at
    round-off level (inevitable when the input came through an FFT) is
    scrubbed rather than rejected, keeping the output strictly k ≠ 0.
    """
    scale = np.abs(nneq.coeffs).max()
    col = np.abs(nneq.coeffs[0, :]).max()
    if col > 1e-13 * scale:
        raise ValueError(
            "kernel_b2 requires a field with a zero k=0 column; "
            "project out the x-average first"
        )
    work = nneq.coeffs.copy()
    work[0, :] = 0.0
    phi = inv_laplacian_meanzero(SpectralField2D(nneq.grid, work))
    return ddx(phi), ddy(phi)


# --------------------------------------------------------------------------
# Right-hand sides
# --------------------------------------------------------------------------

def _grid_product(a_samples: np.ndarray, b_samples: np.ndarray,
                  grid: TorusGrid) -> SpectralField2D:
    return from_physical(grid, a_samples * b_samples)


def advection_rhs(n: SpectralField2D, u) -> SpectralField2D:
    """−u(y) ∂x n as a collocation product.

    Exact (an honest truncated convolution) whenever n is band-limited and
    u is smooth, since the product bandwidth stays below the Nyquist row.
    """
    dxn = to_physical(ddx(n))
    prod = _grid_product(np.asarray(u.samples)[None, :], dxn, n.grid)
    return -1.0 * prod


def flux_divergence(n: SpectralField2D) -> SpectralField2D:
    """∇·(n B(n)) with the product dealiased (the aliasing-sensitive step)."""
    nd = dealias(n)
    kern = attractive_kernel(nd)
    n_phys = to_physical(nd)
    px = _grid_product(n_phys, to_physical(kern.bx), n.grid)
    py = _grid_product(n_phys, to_physical(kern.by), n.grid)
    return dealias(div(px, py))


def nonlinear_rhs(n: SpectralField2D, u, alpha: float,
                  nu: float) -> SpectralField2D:
    """Full right side −u∂x n − νΛ^α n − ν∇·(n B(n)).

    ``u`` is a shear profile with collocation ``samples`` on the y grid, or
    None to switch advection off.  The (0,0) coefficient is pinned to exactly
    zero: each term has zero mean identically, and pinning the bit makes the
    discrete mass conservation exact rather than merely round-off small.
    """
    if nu <= 0.0:
        raise ValueError(f"nu must be positive, got {nu}")
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    rhs = (-nu) * frac_laplacian(n, alpha) - nu * flux_divergence(n)
    if u is not None:
        rhs = rhs + advection_rhs(n, u)
    rhs.coeffs[0, 0] = 0.0
    return rhs


def mode_rhs_zero(n0: SpectralField1D, nneq: SpectralField2D, alpha: float,
                  nu: float) -> SpectralField1D:
    """Right side of the x-averaged equation:

        ∂t n⁰ = −ν Λ_y^α n⁰ − ν ∂y(n⁰ B₁(n⁰)) − ν ⟨∇·(n≠ B₂(n≠))⟩ₓ

    built term by term from the split kernel (not by averaging the full
    right side — the tests compare the two independently).
    """
    n0d = dealias_1d(n0)
    b1 = kernel_b1(n0d)
    transport = ddy_1d(dealias_1d(multiply_1d(n0d, b1)))

    nneq_d = dealias(nneq)
    b2x, b2y = kernel_b2(nneq_d)
    nphys = to_physical(nneq_d)
    fx = _grid_product(nphys, to_physical(b2x), nneq.grid)
    fy = _grid_product(nphys, to_physical(b2y), nneq.grid)
    feedback = project_zero(dealias(div(fx, fy)))

    diffusion = frac_laplacian_1d(n0, alpha)
    return SpectralField1D(
        n0.ny,
        -nu * (diffusion.coeffs + transport.coeffs + feedback.coeffs),
    )


def mode_rhs_nonzero(n0: SpectralField1D, nneq: SpectralField2D, u,
                     alpha: float, nu: float) -> SpectralField2D:
    """Right side of the fluctuation equation:

        ∂t n≠ = −u ∂x n≠ − ν Λ^α n≠
                − ν [ ∂y n⁰ · B₂ʸ + B₁ ∂y n≠ + P≠ ∇·(n≠ B₂)
                      − n⁰ n≠ − (n⁰ − n̄) n≠ ]

    The last two terms are the aggregation feedback released by the exact
    divergence identities ∂y B₁ = −(n⁰ − n̄) and div B₂ = −n≠.
    """
    grid = nneq.grid
    n0d = dealias_1d(n0)
    nneq_d = dealias(nneq)
    nbar = n0.mean

    b2x, b2y = kernel_b2(nneq_d)
    b1 = kernel_b1(n0d)

    n0_phys = to_physical_1d(n0d)[None, :]
    dyn0_phys = to_physical_1d(ddy_1d(n0d))[None, :]
    b1_phys = to_physical_1d(b1)[None, :]
    nneq_phys = to_physical(nneq_d)

    # ∂y n⁰ · B₂ʸ
    t_grad0 = dealias(_grid_product(dyn0_phys, to_physical(b2y), grid))
    # B₁ ∂y n≠
    t_b1 = dealias(_grid_product(b1_phys, to_physical(ddy(nneq_d)), grid))
    # P≠ of the fluctuation self-interaction divergence
    fx = _grid_product(nneq_phys, to_physical(b2x), grid)
    fy = _grid_product(nneq_phys, to_physical(b2y), grid)
    t_self = project_nonzero(dealias(div(fx, fy)))
    # −n⁰ n≠ − (n⁰ − n̄) n≠
    t_feed0 = dealias(_grid_product(n0_phys, nneq_phys, grid))
    t_feed1 = dealias(_grid_product(n0_phys - nbar, nneq_phys, grid))

    rhs = (-nu) * frac_laplacian(nneq, alpha) \
        - nu * (t_grad0 + t_b1 + t_self - t_feed0 - t_feed1)
    if u is not None:
        rhs = rhs + advection_rhs(nneq, u)
    return rhs
