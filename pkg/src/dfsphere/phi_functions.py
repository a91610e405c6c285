"""The phi-functions of exponential integrators and their actions on the Laplacian.

``phi_0(z) = exp(z)`` and ``phi_{l+1}(z) = (phi_l(z) - 1/l!) / z``.  Two ways
to apply ``phi_l(hL)`` are provided:

* a rational approximation with common poles (Caratheodory-Fejer), which turns
  the action into ``p`` shifted linear solves and requires the spectrum of
  ``hL`` to lie on the negative real axis;
* a per-block eigendecomposition, with ``phi_l`` evaluated at the eigenvalues by
  averaging over a small circle around each one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

MAX_COND_V = 1e8
_TAYLOR_RADIUS = 1.0
_TAYLOR_TERMS = 30


def phi_scalar(l: int, z):
    """Evaluate ``phi_l(z)`` for ``l = 0..3`` (scalar or array, real or complex).

    Inside the unit disk a Taylor series ``sum_k z^k / (k + l)!`` is used, which
    avoids cancellation; elsewhere the defining recurrence is applied to ``exp(z)``.
    """
    if l not in (0, 1, 2, 3):
        raise ValueError(f"phi_l is only provided for l = 0..3, got {l!r}")
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _TAYLOR_RADIUS
    if np.any(small):
        zs = z[small]
        acc = np.zeros_like(zs)
        for k in range(_TAYLOR_TERMS - 1, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(k + l)
        out[small] = acc
    if np.any(~small):
        zb = z[~small]
        val = np.exp(zb)
        for j in range(l):
            val = (val - 1.0 / math.factorial(j)) / zb
        out[~small] = val
    return out if out.ndim else out[()]


def etd_coefficients(z):
    """``(f1, f2, f3)`` of the fourth-order ETD Runge-Kutta update, as phi combinations."""
    p1, p2, p3 = (phi_scalar(l, z) for l in (1, 2, 3))
    return p1 - 3 * p2 + 4 * p3, 2 * p2 - 4 * p3, -p2 + 4 * p3


# combination weights of (phi_0, phi_1, phi_2, phi_3) for f1, f2, f3
ETD_WEIGHTS = {
    "f1": (0.0, 1.0, -3.0, 4.0),
    "f2": (0.0, 0.0, 2.0, -4.0),
    "f3": (0.0, 0.0, -1.0, 4.0),
}


class CFConstructionError(RuntimeError):
    """The Caratheodory-Fejer construction did not produce a usable approximant."""


@dataclass(frozen=True)
class CfApproximant:
    """``exp(x) ~ r_inf + sum_j residues_j / (x - poles_j)`` on ``(-inf, 0]``.

    The data already include the shift: the approximation was built for
    ``exp(x - shift)`` and rescaled, moving the poles ``shift`` units right.
    """

    p: int
    poles: np.ndarray
    residues: np.ndarray
    r_inf: float
    shift: float = 1.0

    def __call__(self, x, l: int = 0):
        """Rational approximation of ``phi_l(x)``."""
        x = np.asarray(x, dtype=complex)
        w = self.residues * self.poles ** (-l)
        out = np.sum(w / (x[..., None] - self.poles), axis=-1)
        if l == 0:
            out = out + self.r_inf
        return out

    def weights(self, combo) -> np.ndarray:
        """Per-pole weights of ``sum_l combo[l] * phi_l``."""
        w = np.zeros(self.p, dtype=complex)
        for l, a in enumerate(combo):
            if a:
                w += a * self.residues * self.poles ** (-l)
        return w


@lru_cache(maxsize=None)
def cf_build(p: int = 12, shift: float = 1.0, K: int = 75, nf: int = 1024) -> CfApproximant:
    """Type ``(p, p)`` Caratheodory-Fejer approximant to ``exp`` on ``(-inf, 0]``.

    The half line is mapped to the unit circle, ``exp`` is expanded in a
    Chebyshev-like series there, and the poles and residues are read off the
    singular vector of the Hankel matrix of that series.
    """
    if p not in (10, 12, 14):
        raise ValueError(f"p must be 10, 12 or 14, got {p!r}")
    scl = 9.0
    w = np.exp(2j * np.pi * np.arange(nf) / nf)
    t = w.real
    with np.errstate(over="ignore", divide="ignore"):
        F = np.exp(scl * (t - 1) / (t + 1 + 1e-16))
    c = np.real(np.fft.fft(F)) / nf
    f = np.polyval(c[K::-1], w)
    H = scipy.linalg.hankel(c[1:K + 1])
    U, S, Vh = np.linalg.svd(H)
    if S[p] <= 0 or not np.isfinite(S[p]):
        raise CFConstructionError(f"Hankel matrix is rank deficient at p={p}")
    s = S[p]
    u = U[::-1, p]
    v = Vh.conj()[p]
    zz = np.zeros(nf - K)
    b = np.fft.fft(np.concatenate([u, zz])) / np.fft.fft(np.concatenate([v, zz]))
    rt = f - s * w**K * b
    roots = np.roots(v)
    qk = roots[np.abs(roots) > 1]
    if qk.size != p:
        raise CFConstructionError(f"expected {p} poles outside the unit disk, found {qk.size}")
    qc = np.poly(qk)
    pt = rt * np.polyval(qc, w)
    ptc = np.real(np.fft.fft(pt) / nf)[p::-1]
    ck = np.empty(p, dtype=complex)
    for k in range(p):
        others = np.poly(np.delete(qk, k))
        ck[k] = np.polyval(ptc, qk[k]) / np.polyval(others, qk[k])
    zk = scl * (qk - 1) ** 2 / (qk + 1) ** 2
    cc = 4 * ck * zk / (qk**2 - 1)
    r_inf = float(np.real(0.5 * (1 + np.sum(cc / zk))))
    order = np.argsort(zk.imag)
    scale = math.exp(shift)
    return CfApproximant(p, zk[order] + shift, scale * cc[order], scale * r_inf, shift)


def cf_error(appr: CfApproximant, npts: int = 1000, lo: float = -1e6, hi: float = -1e-6) -> float:
    """Max error of the approximant to ``exp`` on log-spaced points of ``[lo, hi]`` and at 0."""
    x = -np.logspace(np.log10(-hi), np.log10(-lo), npts)
    x = np.concatenate([x, [0.0]])
    return float(np.max(np.abs(appr(x) - np.exp(x))))


def phi_action_cf(appr: CfApproximant, l: int, h: float, pencil, b: np.ndarray) -> np.ndarray:
    """``phi_l(hL) b`` by ``p`` shifted solves ``(hL - z_j) x_j = b``."""
    return phi_combination_cf(appr, [1.0 if i == l else 0.0 for i in range(l + 1)], h, pencil, b)


def phi_combination_cf(appr: CfApproximant, combo, h: float, pencil, b: np.ndarray) -> np.ndarray:
    """``sum_l combo[l] phi_l(hL) b`` from one set of ``p`` shifted solves."""
    weights = appr.weights(combo)
    rhs = pencil.apply_B(np.asarray(b, dtype=complex))
    out = np.zeros_like(rhs)
    for zj, wj in zip(appr.poles, weights):
        if wj != 0:
            out += wj * pencil.factor(-zj, h).solve(rhs, premultiplied=True)
    if combo[0]:
        out += combo[0] * appr.r_inf * b
    return out


class DefectiveBlockError(np.linalg.LinAlgError):
    """A block's eigenvector matrix is too ill conditioned for the eigen approach."""


@dataclass
class EigPhiData:
    """Per-block eigendecompositions of ``L`` and the derived phi matrices.

    Attributes
    ----------
    h : float
        Step size the data were built for.
    eigenvalues : ndarray, shape (n, m)
        Eigenvalues of ``L_k`` (not scaled by ``h``).
    V, Vinv : ndarray, shape (n, m, m)
        Eigenvectors and their inverses.
    M : int
        Number of contour points per eigenvalue.
    radius : float
        Contour radius.
    """

    h: float
    eigenvalues: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    M: int = 32
    radius: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def phi_values(self, combo, step: float) -> np.ndarray:
        """Contour-averaged ``sum_l combo[l] phi_l(step * lambda)`` at every eigenvalue."""
        pts = self.radius * np.exp(2j * np.pi * (np.arange(1, self.M + 1) - 0.5) / self.M)
        z = step * self.eigenvalues[..., None] + pts
        vals = sum(a * phi_scalar(l, z) for l, a in enumerate(combo) if a)
        return np.mean(vals, axis=-1)

    def matrix(self, combo, step: float, scale: complex = 1.0) -> np.ndarray:
        """Blocks of ``scale * V diag(phi values) V^{-1}``, shape ``(n, m, m)``."""
        key = (tuple(combo), float(step), complex(scale))
        if key not in self._cache:
            d = scale * self.phi_values(combo, step)
            self._cache[key] = np.matmul(self.V * d[:, None, :], self.Vinv)
        return self._cache[key]

    def phi_matrix(self, l: int, step: float | None = None) -> np.ndarray:
        step = self.h if step is None else step
        return self.matrix([1.0 if i == l else 0.0 for i in range(l + 1)], step)


def eig_precompute(pencil, h: float, M: int = 32, radius: float = 1.0) -> EigPhiData:
    """Eigendecompose every block of ``L`` for the eigen-based phi actions.

    Raises
    ------
    DefectiveBlockError
        If some block's unit-column eigenvector matrix has condition number
        above 1e8.
    """
    B = pencil.block_B()
    m, n = pencil.m, pencil.n
    lam = np.empty((n, m), dtype=complex)
    V = np.empty((n, m, m), dtype=complex)
    Vinv = np.empty_like(V)
    for i in range(n):
        ev, vec = scipy.linalg.eig(pencil.block_A(i), B)
        vec = vec / np.linalg.norm(vec, axis=0)
        cond = np.linalg.cond(vec)
        if not np.isfinite(cond) or cond > MAX_COND_V:
            raise DefectiveBlockError(f"block {i} is nearly defective: cond(V) = {cond:.3g}")
        lam[i], V[i], Vinv[i] = ev, vec, np.linalg.inv(vec)
    return EigPhiData(float(h), lam, V, Vinv, M, radius)


def apply_blocks(mats: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Apply per-block ``(n, m, m)`` matrices to the columns of an ``m x n`` grid."""
    return np.einsum("kij,jk->ik", mats, c, optimize=True)


class CFPhiProvider:
    """ETDRK4 stage operators from CF shifted solves.

    Each stage combines its phi actions into one right-hand side per pole, so a
    step costs ``4p`` solves.
    """

    kind = "cf"

    def __init__(self, pencil, h: float, p: int = 12):
        if pencil.is_dispersive:
            raise ValueError("CF phi actions require a diffusive (real, nonpositive) spectrum")
        self.pencil = pencil
        self.h = float(h)
        self.appr = cf_build(p)
        a = self.appr
        self._half0 = a.weights((1.0,))
        self._half1 = a.weights((0.0, 0.5 * h))
        self._full = {name: h * a.weights(wts) for name, wts in ETD_WEIGHTS.items()}
        self._full0 = a.weights((1.0,))
        self.solves = 0

    def prepare(self) -> None:
        for zj in self.appr.poles:
            self.pencil.factor(-zj, self.h)
            self.pencil.factor(-zj, self.h / 2)

    def _combine(self, step, terms, r_inf_term):
        pencil = self.pencil
        rhs_b = [(pencil.apply_B(v), w) for v, w in terms]
        out = np.zeros(rhs_b[0][0].shape, dtype=complex)
        for j, zj in enumerate(self.appr.poles):
            rhs = sum(w[j] * r for r, w in rhs_b)
            out += pencil.factor(-zj, step).solve(rhs, premultiplied=True)
            self.solves += 1
        return out + self.appr.r_inf * r_inf_term

    def half_step(self, u, v):
        """``phi_0(hL/2) u + (h/2) phi_1(hL/2) v``."""
        return self._combine(self.h / 2, [(u, self._half0), (v, self._half1)], u)

    def full_step(self, u, nu, nab, nc):
        """``phi_0(hL) u + h (f1 nu + f2 nab + f3 nc)``."""
        f = self._full
        return self._combine(self.h, [(u, self._full0), (nu, f["f1"]), (nab, f["f2"]), (nc, f["f3"])], u)


class EigPhiProvider:
    """ETDRK4 stage operators as dense per-block matrices from eigendecompositions."""

    kind = "eig"

    def __init__(self, pencil, h: float, M: int = 32, radius: float = 1.0):
        self.pencil = pencil
        self.h = float(h)
        self.M = M
        self.radius = radius
        self.data: EigPhiData | None = None

    def prepare(self) -> None:
        h = self.h
        d = eig_precompute(self.pencil, h, self.M, self.radius)
        self.E2 = d.matrix((1.0,), h / 2)
        self.Q = d.matrix((0.0, 1.0), h / 2, h / 2)
        self.E = d.matrix((1.0,), h)
        self.F1 = d.matrix(ETD_WEIGHTS["f1"], h, h)
        self.F2 = d.matrix(ETD_WEIGHTS["f2"], h, h)
        self.F3 = d.matrix(ETD_WEIGHTS["f3"], h, h)
        d._cache.clear()
        self.data = d

    def half_step(self, u, v):
        return apply_blocks(self.E2, u) + apply_blocks(self.Q, v)

    def full_step(self, u, nu, nab, nc):
        return (apply_blocks(self.E, u) + apply_blocks(self.F1, nu)
                + apply_blocks(self.F2, nab) + apply_blocks(self.F3, nc))
