"""Uniform grids, FFT transforms and Fourier differentiation in coefficient space.

Coefficient arrays are stored in ascending wavenumber order: row ``a`` holds
latitudinal wavenumber ``j = a - m/2`` and column ``b`` holds longitudinal
wavenumber ``k = b - n/2``.  The ``-m/2`` entry carries the full (unhalved)
boundary mode, i.e. the usual m-term FFT representation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import sparse


class InvalidGridError(ValueError):
    """Raised for grid sizes the method does not support."""


def _workers() -> int:
    return int(os.environ.get("DFSPHERE_THREADS", "1"))


@dataclass(frozen=True)
class GridSpec:
    """An m x n doubled longitude-latitude grid (m latitudes, n longitudes)."""

    m: int
    n: int

    def __post_init__(self):
        for name in ("m", "n"):
            val = getattr(self, name)
            if int(val) != val or val < 2 or val % 2:
                raise InvalidGridError(f"{name} must be an even integer >= 2, got {val!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @classmethod
    def square(cls, n: int) -> "GridSpec":
        return cls(n, n)


def make_grid(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(theta, lam)``: the m latitudes and n longitudes, both starting at -pi."""
    theta = -np.pi + np.arange(spec.m) * (2 * np.pi / spec.m)
    lam = -np.pi + np.arange(spec.n) * (2 * np.pi / spec.n)
    return theta, lam


def wavenumbers(m: int) -> np.ndarray:
    """Integer wavenumbers ``-m/2, ..., m/2 - 1``."""
    return np.arange(-(m // 2), m // 2)


def vals_to_coeffs(values: np.ndarray) -> np.ndarray:
    """2D Fourier coefficients of samples on the doubled grid.

    Implements ``u_jk = 1/(nm) sum_p sum_q u(lam_q, theta_p) exp(-i j theta_p) exp(-i k lam_q)``.
    The grid starts at -pi, so shifting the samples by half a period before the
    FFT removes the ``(-1)^(j+k)`` phase.
    """
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] % 2 or values.shape[1] % 2:
        raise InvalidGridError(f"expected an even-by-even 2D array, got shape {values.shape}")
    m, n = values.shape
    c = scipy.fft.fft2(scipy.fft.ifftshift(values), workers=_workers())
    return scipy.fft.fftshift(c) / (m * n)


def coeffs_to_vals(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vals_to_coeffs`."""
    coeffs = np.asarray(coeffs)
    if coeffs.ndim != 2 or coeffs.shape[0] % 2 or coeffs.shape[1] % 2:
        raise InvalidGridError(f"expected an even-by-even 2D array, got shape {coeffs.shape}")
    m, n = coeffs.shape
    v = scipy.fft.ifft2(scipy.fft.ifftshift(coeffs), workers=_workers())
    return scipy.fft.fftshift(v) * (m * n)


def resample_coeffs(coeffs: np.ndarray, m_new: int, n_new: int) -> np.ndarray:
    """Zero-pad (or truncate) a coefficient grid to ``m_new x n_new``.

    When padding, the stored ``-m/2`` boundary mode is split evenly between
    ``-m/2`` and ``+m/2`` so the padded function is the symmetric interpolant.
    """
    out = np.asarray(coeffs, dtype=complex)
    out = _resample_axis(out, m_new, axis=0)
    return _resample_axis(out, n_new, axis=1)


def _resample_axis(c: np.ndarray, new: int, axis: int) -> np.ndarray:
    old = c.shape[axis]
    if new == old:
        return c
    c = np.moveaxis(c, axis, 0)
    out = np.zeros((new,) + c.shape[1:], dtype=complex)
    if new > old:
        off = (new - old) // 2
        out[off:off + old] = c
        out[off] *= 0.5
        out[off + old] = c[0] * 0.5
    else:
        off = (old - new) // 2
        out[:] = c[off:off + new]
        # fold the +new/2 mode back onto -new/2
        out[0] += c[off + new]
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class DiagDiffMatrix:
    """Diagonal Fourier differentiation matrix acting on m-term coefficient vectors."""

    order: int
    diagonal: np.ndarray

    @property
    def m(self) -> int:
        return self.diagonal.shape[0]

    def toarray(self) -> np.ndarray:
        return np.diag(self.diagonal)

    def tocsr(self) -> sparse.csr_matrix:
        return sparse.diags(self.diagonal, 0, format="csr")

    def __matmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 1:
            return self.diagonal * other
        return self.diagonal[:, None] * other


def diff_matrix(m: int, order: int) -> DiagDiffMatrix:
    """First- or second-order differentiation matrix in coefficient space.

    The first-order matrix zeroes the ``-m/2`` mode (its symmetric partner
    ``+m/2`` cancels it); the second-order matrix keeps ``-(m/2)^2``.
    """
    _check_even(m)
    j = wavenumbers(m).astype(float)
    if order == 1:
        d = 1j * j
        d[0] = 0.0
    elif order == 2:
        d = -(j**2) + 0j
    else:
        raise ValueError(f"unsupported differentiation order {order!r}; expected 1 or 2")
    return DiagDiffMatrix(order, d)


def odd_diff_matrix(m: int) -> np.ndarray:
    """Diagonal of the (m+1)-term first-order differentiation matrix, wavenumbers -m/2..m/2."""
    return 1j * np.arange(-(m // 2), m // 2 + 1).astype(float)


@dataclass(frozen=True)
class ProjectionMaps:
    """Maps between the m-term FFT representation and the (m+1)-term symmetric one.

    ``P`` halves the boundary mode into both ends, ``Q_diff`` folds ``+m/2``
    back onto ``-m/2``, and ``Q_mult`` does the same after truncating a
    product that was padded by two modes on each side.
    """

    P: sparse.csr_matrix
    Q_diff: sparse.csr_matrix
    Q_mult: sparse.csr_matrix


def projection_maps(m: int) -> ProjectionMaps:
    _check_even(m)
    P = sparse.lil_matrix((m + 1, m))
    P[0, 0] = 0.5
    P[m, 0] = 0.5
    for r in range(1, m):
        P[r, r] = 1.0

    Qd = sparse.lil_matrix((m, m + 1))
    Qd[0, 0] = 1.0
    Qd[0, m] = 1.0
    for r in range(1, m):
        Qd[r, r] = 1.0

    Qm = sparse.lil_matrix((m, m + 5))
    for r in range(m):
        Qm[r, r + 2] = 1.0
    Qm[0, m + 2] = 1.0
    return ProjectionMaps(P.tocsr(), Qd.tocsr(), Qm.tocsr())


def _check_even(m: int) -> None:
    if int(m) != m or m < 2 or m % 2:
        raise InvalidGridError(f"size must be an even integer >= 2, got {m!r}")
