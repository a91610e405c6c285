"""Double Fourier sphere doubling, restriction and diagnostics.

A function ``u(lam, theta)`` on the sphere (colatitude ``theta`` in ``[0, pi]``)
is extended to ``[-pi, pi]^2`` by ``u~(lam, theta) = u(lam +- pi, -theta)`` for
``theta < 0``.  The extension is bi-periodic, so it can be represented by a 2D
Fourier series and manipulated with FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fourier_core import (
    GridSpec,
    coeffs_to_vals,
    make_grid,
    resample_coeffs,
    vals_to_coeffs,
    wavenumbers,
)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SphereFunction:
    """A sphere function given either pointwise or by doubled coefficients.

    Exactly one of ``evaluator`` and ``coeffs`` is authoritative; ``evaluator``
    takes broadcastable arrays ``(lam, theta)`` with ``theta`` in ``[0, pi]``.
    """

    evaluator: Optional[Evaluator] = None
    coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.evaluator is None) == (self.coeffs is None):
            raise ValueError("provide exactly one of evaluator or coeffs")

    @classmethod
    def from_xyz(cls, func: Callable) -> "SphereFunction":
        """Wrap ``func(x, y, z)`` in Cartesian coordinates on the unit sphere."""

        def ev(lam, theta):
            st = np.sin(theta)
            return func(np.cos(lam) * st, np.sin(lam) * st, np.cos(theta))

        return cls(evaluator=ev)

    def on_grid(self, spec: GridSpec) -> np.ndarray:
        """Doubled coefficients on ``spec``."""
        if self.coeffs is not None:
            c = np.asarray(self.coeffs, dtype=complex)
            return resample_coeffs(c, spec.m, spec.n) if c.shape != spec.shape else c
        return vals_to_coeffs(double_up(self, spec))


def double_up(f: SphereFunction | Evaluator, spec: GridSpec) -> np.ndarray:
    """Sample the doubled-up function on the full ``m x n`` grid.

    Rows with ``theta >= 0`` sample ``u`` directly; the others sample
    ``u(lam + pi, -theta)`` for ``lam <= 0`` and ``u(lam - pi, -theta)`` otherwise.
    """
    if isinstance(f, SphereFunction):
        if f.evaluator is None:
            return coeffs_to_vals(f.on_grid(spec))
        ev = f.evaluator
    else:
        ev = f
    theta, lam = make_grid(spec)
    TH, LA = np.meshgrid(theta, lam, indexing="ij")
    flip = TH < 0
    lam_eval = np.where(flip, np.where(LA <= 0, LA + np.pi, LA - np.pi), LA)
    th_eval = np.abs(TH)
    out = np.asarray(ev(lam_eval, th_eval), dtype=complex)
    return np.broadcast_to(out, spec.shape).copy()


def restrict(v: np.ndarray) -> np.ndarray:
    """Keep the ``m/2 + 1`` rows with ``theta`` in ``[0, pi]``, north pole first."""
    v = np.asarray(v)
    m = v.shape[0]
    return np.concatenate([v[m // 2:], v[:1]], axis=0)


def restricted_colatitudes(m: int) -> np.ndarray:
    """Colatitudes of the rows returned by :func:`restrict`."""
    return np.arange(m // 2 + 1) * (2 * np.pi / m)


def pole_residual(c: np.ndarray) -> float:
    """Largest violation of the pole conditions over nonzero longitudinal wavenumbers.

    For ``k != 0`` both ``sum_j c_jk`` and ``sum_j (-1)^j c_jk`` must vanish
    (the function is single valued at the north and south poles).
    """
    c = np.asarray(c)
    m, n = c.shape
    sign = (-1.0) ** wavenumbers(m)
    cols = np.ones(n, dtype=bool)
    cols[n // 2] = False
    s1 = np.abs(c[:, cols].sum(axis=0))
    s2 = np.abs((sign[:, None] * c[:, cols]).sum(axis=0))
    if s1.size == 0:
        return 0.0
    return float(max(s1.max(), s2.max()))


def symmetry_residual(c: np.ndarray) -> float:
    """Max-norm deviation of the grid values from an exact doubling.

    A doubled function satisfies ``u~(lam, theta) = u~(lam + pi, -theta)``; on
    the grid this pairs row ``p`` with row ``-p mod m`` and column ``q`` with
    ``q + n/2 mod n``.
    """
    v = coeffs_to_vals(c)
    m, n = v.shape
    rows = (-np.arange(m)) % m
    cols = (np.arange(n) + n // 2) % n
    return float(np.max(np.abs(v - v[np.ix_(rows, cols)])))


def latitude_weights(m: int) -> np.ndarray:
    """Exact integrals ``int_0^pi sin(theta) exp(i j theta) dtheta`` for ``j = -m/2 .. m/2-1``."""
    j = wavenumbers(m)
    w = np.zeros(m, dtype=complex)
    even = j % 2 == 0
    w[even] = 2.0 / (1.0 - j[even].astype(float) ** 2)
    w[j == 1] = 0.5j * np.pi
    w[j == -1] = -0.5j * np.pi
    return w


def sphere_integral(c: np.ndarray) -> complex:
    """Integral over the sphere of the function with doubled coefficients ``c``."""
    c = np.asarray(c)
    m, n = c.shape
    return complex(2 * np.pi * np.dot(latitude_weights(m), c[:, n // 2]))


def sphere_l2_norm(c: np.ndarray) -> float:
    """L2 norm on the sphere, computed exactly for band-limited coefficients.

    ``|u|^2`` is formed on a grid of twice the resolution (so the product is not
    aliased) and integrated with :func:`sphere_integral`.
    """
    c = np.asarray(c, dtype=complex)
    m, n = c.shape
    v = coeffs_to_vals(resample_coeffs(c, 2 * m, 2 * n))
    sq = vals_to_coeffs(np.abs(v) ** 2)
    return float(np.sqrt(max(sphere_integral(sq).real, 0.0)))
