"""Block-diagonal Laplacian in doubled Fourier coefficient space.

In coefficient space the surface Laplacian decouples over the longitudinal
wavenumber ``k``.  After premultiplying by ``T_sin2`` each block is the pencil

    A_k = alpha * (T_sin2 D2 + T_cossin D1 - k^2 I),    B = T_sin2,

with ``L_k = B^{-1} A_k``.  Both matrices are pentadiagonal with two corner
entries, so applying ``L`` or solving shifted systems costs O(nm).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse

from .fourier_core import GridSpec, InvalidGridError, diff_matrix, wavenumbers
from .mult_matrices import build_Tcossin, build_Tsin2

logger = logging.getLogger(__name__)

DIAGNOSTICS_MAX_M = 128


@dataclass
class BlockPencil:
    """The premultiplied pencil ``(A_k, B)`` for every longitudinal wavenumber.

    Attributes
    ----------
    m, n : int
        Grid size.
    alpha : complex
        Diffusion coefficient multiplying the Laplacian.
    A0 : scipy.sparse.csr_matrix
        ``T_sin2 D2 + T_cossin D1`` (real).
    B : scipy.sparse.csr_matrix
        ``T_sin2`` (real), shared by all blocks.
    shifts : ndarray
        ``-k^2`` for each block, ``k = -n/2 .. n/2-1``.
    """

    m: int
    n: int
    alpha: complex
    A0: sparse.csr_matrix
    B: sparse.csr_matrix
    shifts: np.ndarray
    _factors: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.m, self.n)

    @property
    def is_dispersive(self) -> bool:
        return complex(self.alpha).imag != 0

    def block_A(self, i: int) -> np.ndarray:
        """Dense ``A_i`` (including ``alpha``) for block index ``i``."""
        a = self.A0.toarray() + self.shifts[i] * np.eye(self.m)
        return self._scale(a)

    def block_B(self) -> np.ndarray:
        return self.B.toarray()

    def block_L(self, i: int) -> np.ndarray:
        """Dense ``B^{-1} A_i``; for diagnostics and tests only."""
        return np.linalg.solve(self.block_B(), self.block_A(i))

    def dense_operator(self) -> np.ndarray:
        """The full ``nm x nm`` operator acting on column-major stacked coefficients."""
        return scipy.linalg.block_diag(*[self.block_L(i) for i in range(self.n)])

    def _scale(self, a):
        alpha = complex(self.alpha)
        return a * alpha.real if alpha.imag == 0 else a * alpha

    def apply_A(self, c: np.ndarray) -> np.ndarray:
        """``A_k c_k`` for every column."""
        return self._scale(self.A0 @ c + c * self.shifts[None, :])

    def apply_B(self, c: np.ndarray) -> np.ndarray:
        return self.B @ c

    def factor(self, z: complex, w: complex):
        """Cached LU factors of ``z B + w A_k`` for all blocks."""
        from .linsolve import factor

        key = (complex(z), complex(w))
        if key not in self._factors:
            self._factors[key] = factor(self, z, w)
        return self._factors[key]

    def solve_B(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``B y_k = rhs_k`` for every column."""
        return self.factor(1.0, 0.0).solve(rhs, premultiplied=True)


def assemble(spec: GridSpec, alpha: complex = 1.0) -> BlockPencil:
    """Build the pencil for ``alpha * Laplacian`` on an ``m x n`` doubled grid."""
    if spec.m < 8 or spec.n < 8:
        raise InvalidGridError(f"the Laplacian needs m, n >= 8, got {spec.m} x {spec.n}")
    m, n = spec.m, spec.n
    Ts = build_Tsin2(m).toarray()
    Tc = build_Tcossin(m).toarray()
    D1 = diff_matrix(m, 1).diagonal
    D2 = diff_matrix(m, 2).diagonal
    A0 = Ts * D2[None, :] + Tc * D1[None, :]
    # T_cossin is imaginary and D1 is imaginary, so the product is real
    A0 = sparse.csr_matrix(np.real(A0))
    B = sparse.csr_matrix(Ts)
    shifts = -(wavenumbers(n).astype(float) ** 2)
    alpha = complex(alpha)
    return BlockPencil(m, n, alpha, A0, B, shifts)


def apply(pencil: BlockPencil, c: np.ndarray) -> np.ndarray:
    """Apply ``alpha * Laplacian`` to doubled coefficients ``c``: ``B^{-1} A_k c_k`` per block."""
    c = np.asarray(c, dtype=complex)
    if c.shape != (pencil.m, pencil.n):
        raise ValueError(f"coefficient shape {c.shape} does not match pencil {(pencil.m, pencil.n)}")
    return pencil.solve_B(pencil.apply_A(c))


@dataclass(frozen=True)
class SpectralReport:
    max_abs_eig: float
    max_imag: float
    max_positive_real: float
    all_real: bool
    all_nonpositive: bool
    condV: float
    eigenvalues: np.ndarray


def spectral_diagnostics(pencil: BlockPencil, rtol: float = 1e-8) -> SpectralReport:
    """Dense generalized eigendecomposition of every block.

    ``condV`` is the 2-norm condition number of the block-diagonal eigenvector
    matrix with unit-norm columns, i.e. the largest singular value over all
    blocks divided by the smallest.
    """
    if pencil.m > DIAGNOSTICS_MAX_M or pencil.n > DIAGNOSTICS_MAX_M:
        raise ValueError(f"dense diagnostics limited to m, n <= {DIAGNOSTICS_MAX_M}")
    B = pencil.block_B()
    eigs = []
    smax, smin = 0.0, np.inf
    for i in range(pencil.n):
        lam, V = scipy.linalg.eig(pencil.block_A(i), B)
        V = V / np.linalg.norm(V, axis=0)
        s = np.linalg.svd(V, compute_uv=False)
        smax, smin = max(smax, s[0]), min(smin, s[-1])
        eigs.append(lam)
    lam = np.concatenate(eigs)
    scale = np.max(np.abs(lam))
    max_imag = float(np.max(np.abs(lam.imag)))
    max_pos = float(max(np.max(lam.real), 0.0))
    return SpectralReport(
        max_abs_eig=float(scale),
        max_imag=max_imag,
        max_positive_real=max_pos,
        all_real=max_imag <= rtol * scale,
        all_nonpositive=max_pos <= rtol * scale,
        condV=float(smax / smin),
        eigenvalues=lam,
    )


def msin2_cluster_eigs(m: int) -> np.ndarray:
    """Eigenvalues of the (m+1)x(m+1) sin^2 Toeplitz matrix, in ascending order.

    The matrix splits into two tridiagonal Toeplitz chains (even and odd
    indices) of sizes ``m/2 + 1`` and ``m/2``.
    """
    if int(m) != m or m < 6 or m % 2:
        raise InvalidGridError(f"m must be even and >= 6, got {m!r}")
    h = m // 2
    a = 0.5 * (np.cos(np.pi * np.arange(1, h + 1) / (h + 1)) + 1)
    b = 0.5 * (np.cos(np.pi * np.arange(1, h + 2) / (h + 2)) + 1)
    return np.sort(np.concatenate([a, b]))
