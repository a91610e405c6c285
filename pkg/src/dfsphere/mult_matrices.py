"""Nonsingular coefficient-space multiplication matrices for sin^2(theta) and cos(theta)sin(theta).

Multiplying an m-term Fourier series by a trigonometric polynomial of degree 2
produces modes outside the stored range.  The naive m x m Toeplitz truncation is
wrong for the boundary mode, so instead the coefficients are first expanded into
the symmetric (m+1)-term form, multiplied, truncated and folded back.  The
result is the Toeplitz band plus a handful of corner corrections, which are
assembled here directly from the three-term expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .fourier_core import InvalidGridError

# e^{i s theta} coefficients of the multipliers
SIN2_TAPS = {-2: -0.25, 0: 0.5, 2: -0.25}
COSSIN_TAPS = {-2: 0.25j, 2: -0.25j}


@dataclass
class BandedCornerMatrix:
    """Square matrix with bandwidth <= 2 plus a few explicit corner entries.

    Parameters
    ----------
    m : int
        Dimension.
    bands : dict
        Maps a diagonal offset in ``-2..2`` to its entries (length ``m - |offset|``).
    corners : list of tuple
        Extra ``(row, col, value)`` entries outside the band.
    """

    m: int
    bands: dict[int, np.ndarray]
    corners: list[tuple[int, int, complex]] = field(default_factory=list)

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.m, self.m), dtype=complex)
        for off, vals in self.bands.items():
            idx = np.arange(self.m - abs(off))
            if off >= 0:
                out[idx, idx + off] += vals
            else:
                out[idx - off, idx] += vals
        for r, c, v in self.corners:
            out[r, c] += v
        if np.all(out.imag == 0):
            return out.real
        return out

    def tocsr(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(self.toarray())

    def __matmul__(self, other):
        return self.toarray() @ np.asarray(other)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "BandedCornerMatrix":
        a = np.asarray(a)
        m = a.shape[0]
        if np.all(a.imag == 0):
            a = a.real
        bands = {}
        for off in range(-2, 3):
            diag = np.diagonal(a, off).copy()
            if np.any(diag != 0):
                bands[off] = diag
        rows, cols = np.nonzero(a)
        corners = [(int(r), int(c), a[r, c]) for r, c in zip(rows, cols) if abs(int(r) - int(c)) > 2]
        return cls(m, bands, corners)


def _check_size(m: int) -> None:
    if int(m) != m or m < 6 or m % 2:
        raise InvalidGridError(f"multiplication matrices need even m >= 6, got {m!r}")


def _fold(m: int, taps: dict[int, complex]) -> np.ndarray:
    """Assemble Q M P for a multiplier with the given exponential taps."""
    half = m // 2
    out = np.zeros((m, m), dtype=complex)
    for col in range(m):
        j = col - half
        # column 0 stores the boundary mode, split evenly between -m/2 and +m/2
        sources = [(j, 1.0)] if col else [(-half, 0.5), (half, 0.5)]
        for js, weight in sources:
            for s, t in taps.items():
                jt = js + s
                if jt == half:
                    jt = -half
                if -half <= jt < half:
                    out[jt + half, col] += weight * t
    return out


def build_Tsin2(m: int) -> BandedCornerMatrix:
    """Multiplication by sin^2(theta) on m-term coefficient vectors (real entries)."""
    _check_size(m)
    return BandedCornerMatrix.from_dense(_fold(m, SIN2_TAPS).real)


def build_Tcossin(m: int) -> BandedCornerMatrix:
    """Multiplication by cos(theta)sin(theta) on m-term coefficient vectors (imaginary entries)."""
    _check_size(m)
    return BandedCornerMatrix.from_dense(_fold(m, COSSIN_TAPS))


def naive_Msin2(m: int) -> BandedCornerMatrix:
    """Plain truncated Toeplitz matrix for sin^2(theta), without boundary corrections.

    Kept for contrast: it gives wrong results for polynomials that touch the
    boundary mode.
    """
    _check_size(m)
    bands = {0: np.full(m, 0.5), -2: np.full(m - 2, -0.25), 2: np.full(m - 2, -0.25)}
    return BandedCornerMatrix(m, bands, [])
