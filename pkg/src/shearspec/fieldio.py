"""Field serialization: flat binary snapshots, JSON sidecars, CSV export.

The binary layout is deliberately dumb so any language can read it:

    int64 LE: nx
    int64 LE: ny
    nx*ny pairs of float64 LE: (Re n̂, Im n̂), row-major over (k, l)
        with k ascending from −nx/2 and l ascending from −ny/2.

A sidecar ``<path>.json`` records the layout and normalization so a snapshot
is self-describing.  CSV export writes collocation samples for plotting.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spectral import SpectralField2D, TorusGrid, to_physical

__all__ = ["save_field", "load_field", "export_physical_csv"]

_FORMAT_NAME = "shearspec-field"
_FORMAT_VERSION = 1


def save_field(f: SpectralField2D, path) -> None:
    """Write a field and its JSON descriptor next to it."""
    path = Path(path)
    # internal storage is FFT order; on disk k and l ascend from −n/2
    shifted = np.fft.fftshift(f.coeffs)
    payload = np.empty((f.grid.nx, f.grid.ny, 2), dtype="<f8")
    payload[:, :, 0] = shifted.real
    payload[:, :, 1] = shifted.imag
    with open(path, "wb") as fh:
        np.array([f.grid.nx, f.grid.ny], dtype="<i8").tofile(fh)
        payload.tofile(fh)
    sidecar = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "nx": f.grid.nx,
        "ny": f.grid.ny,
        "layout": "row-major (k, l); k ascending from -nx/2, "
                  "l ascending from -ny/2; interleaved re/im float64 LE",
        "normalization": "true Fourier coefficients of e^{i(kx+ly)} "
                         "on [-pi, pi)^2",
    }
    with open(path.with_name(path.name + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_field(path) -> SpectralField2D:
    """Read a field written by :func:`save_field`."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = np.fromfile(fh, dtype="<i8", count=2)
        if header.size != 2:
            raise ValueError(f"{path}: truncated header")
        nx, ny = int(header[0]), int(header[1])
        grid = TorusGrid(nx, ny)
        payload = np.fromfile(fh, dtype="<f8", count=nx * ny * 2)
    if payload.size != nx * ny * 2:
        raise ValueError(
            f"{path}: expected {nx * ny * 2} floats, found {payload.size}"
        )
    payload = payload.reshape(nx, ny, 2)
    shifted = payload[:, :, 0] + 1j * payload[:, :, 1]
    return SpectralField2D(grid, np.fft.ifftshift(shifted))


def export_physical_csv(f: SpectralField2D, path) -> None:
    """Collocation samples as ``x,y,value`` rows (header included)."""
    samples = to_physical(f)
    xs, ys = f.grid.x, f.grid.y
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for i in range(f.grid.nx):
            for j in range(f.grid.ny):
                # repr of python floats round-trips exactly
                fh.write(
                    f"{float(xs[i])!r},{float(ys[j])!r},"
                    f"{float(samples[i, j])!r}\n"
                )
