"""Unpivoted sparse LU for the shifted blocks ``z B + w A_k``.

All blocks share one sparsity pattern (bands at offsets 0 and +-2 plus the two
corner entries), so the symbolic factorization, including fill, is computed
once.  The numeric factorization then replays a fixed list of scalar
operations for every block, and a solve is a forward and a backward sweep.
Both loops are compiled with numba; each costs O(m) per block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

logger = logging.getLogger(__name__)

PIVOT_RTOL = 1e-13
MAX_L_ENTRY = 1e6


class FactorizationBreakdown(ArithmeticError):
    """A zero (or negligible) pivot was met, or the factors grew unacceptably."""

    def __init__(self, message: str, block: Optional[int] = None, step: Optional[int] = None):
        super().__init__(message)
        self.block = block
        self.step = step


@dataclass(frozen=True)
class _Symbolic:
    """Filled sparsity pattern and the operation lists that factor and solve on it."""

    m: int
    rows: np.ndarray
    cols: np.ndarray
    diag_pos: np.ndarray
    div_ptr: np.ndarray
    div_pos: np.ndarray
    upd_ptr: np.ndarray
    upd_t: np.ndarray
    upd_l: np.ndarray
    upd_u: np.ndarray
    l_ptr: np.ndarray
    l_row: np.ndarray
    l_pos: np.ndarray
    u_ptr: np.ndarray
    u_col: np.ndarray
    u_pos: np.ndarray

    @property
    def nnz(self) -> int:
        return self.rows.size

    def gather(self, dense: np.ndarray) -> np.ndarray:
        """Values of a dense matrix (or stack of matrices) at the pattern positions."""
        return dense[..., self.rows, self.cols]


def symbolic_factor(pattern: np.ndarray) -> _Symbolic:
    """Fill in ``pattern`` under unpivoted elimination and record the operations."""
    S = np.array(pattern, dtype=bool)
    m = S.shape[0]
    np.fill_diagonal(S, True)
    for k in range(m):
        below = np.nonzero(S[k + 1:, k])[0] + k + 1
        right = np.nonzero(S[k, k + 1:])[0] + k + 1
        if below.size and right.size:
            S[np.ix_(below, right)] = True
    rows, cols = np.nonzero(S)
    pos = -np.ones((m, m), dtype=np.int64)
    pos[rows, cols] = np.arange(rows.size)

    div_ptr, div_pos = [0], []
    upd_ptr, upd_t, upd_l, upd_u = [0], [], [], []
    l_ptr, l_row, l_pos = [0], [], []
    u_ptr, u_col, u_pos = [0], [], []
    for k in range(m):
        below = np.nonzero(S[k + 1:, k])[0] + k + 1
        right = np.nonzero(S[k, k + 1:])[0] + k + 1
        div_pos.extend(pos[below, k])
        div_ptr.append(len(div_pos))
        for r in below:
            for c in right:
                upd_t.append(pos[r, c])
                upd_l.append(pos[r, k])
                upd_u.append(pos[k, c])
        upd_ptr.append(len(upd_t))
        l_row.extend(below)
        l_pos.extend(pos[below, k])
        l_ptr.append(len(l_row))
        u_col.extend(right)
        u_pos.extend(pos[k, right])
        u_ptr.append(len(u_col))

    def arr(x):
        return np.asarray(x, dtype=np.int64)

    return _Symbolic(
        m, arr(rows), arr(cols), arr(pos[np.arange(m), np.arange(m)]),
        arr(div_ptr), arr(div_pos), arr(upd_ptr), arr(upd_t), arr(upd_l), arr(upd_u),
        arr(l_ptr), arr(l_row), arr(l_pos), arr(u_ptr), arr(u_col), arr(u_pos),
    )


@numba.njit(cache=True)
def _factor_kernel(V, diag_pos, div_ptr, div_pos, upd_ptr, upd_t, upd_l, upd_u, rtol):
    nb = V.shape[0]
    m = diag_pos.shape[0]
    for b in range(nb):
        v = V[b]
        scale = 0.0
        for t in range(v.shape[0]):
            a = abs(v[t])
            if a > scale:
                scale = a
        for k in range(m):
            piv = v[diag_pos[k]]
            if abs(piv) <= rtol * scale:
                return b, k
            for t in range(div_ptr[k], div_ptr[k + 1]):
                v[div_pos[t]] /= piv
            for t in range(upd_ptr[k], upd_ptr[k + 1]):
                v[upd_t[t]] -= v[upd_l[t]] * v[upd_u[t]]
    return -1, -1


@numba.njit(cache=True)
def _solve_kernel(V, X, diag_pos, l_ptr, l_row, l_pos, u_ptr, u_col, u_pos):
    # X has shape (nblocks, m) and is overwritten with the solution
    nb = X.shape[0]
    m = diag_pos.shape[0]
    shared = V.shape[0] == 1
    for b in range(nb):
        v = V[0] if shared else V[b]
        x = X[b]
        for k in range(m):
            xk = x[k]
            if xk != 0:
                for t in range(l_ptr[k], l_ptr[k + 1]):
                    x[l_row[t]] -= v[l_pos[t]] * xk
        for k in range(m - 1, -1, -1):
            s = x[k]
            for t in range(u_ptr[k], u_ptr[k + 1]):
                s -= v[u_pos[t]] * x[u_col[t]]
            x[k] = s / v[diag_pos[k]]


@dataclass
class _Group:
    """Blocks sharing one symbolic factorization."""

    blocks: np.ndarray
    sym: _Symbolic
    values: np.ndarray  # (len(blocks) or 1, nnz) packed L\U factors


class BlockLU:
    """LU factors of ``z B + w A_k`` for every block of a pencil.

    Use :func:`factor` to construct.
    """

    def __init__(self, pencil, z: complex, w: complex, groups: list[_Group],
                 replaced_rows: dict[int, int]):
        self.pencil = pencil
        self.z = complex(z)
        self.w = complex(w)
        self.groups = groups
        self.replaced_rows = dict(replaced_rows)

    @property
    def m(self) -> int:
        return self.pencil.m

    @property
    def n(self) -> int:
        return self.pencil.n

    def solve(self, b: np.ndarray, premultiplied: bool = False) -> np.ndarray:
        """Solve ``(z I + w L) x = b``; see :func:`solve`."""
        return solve(self, self.pencil, b, premultiplied=premultiplied)

    def factors(self, block: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(L, U)`` of one block (unit lower / upper triangular)."""
        for g in self.groups:
            hit = np.nonzero(g.blocks == block)[0]
            if hit.size:
                vals = g.values[0 if g.values.shape[0] == 1 else hit[0]]
                F = np.zeros((self.m, self.m), dtype=vals.dtype)
                F[g.sym.rows, g.sym.cols] = vals
                return np.tril(F, -1) + np.eye(self.m), np.triu(F)
        raise IndexError(f"block {block} out of range")


def _block_values(pencil, sym: _Symbolic, z: complex, w: complex, blocks: np.ndarray) -> np.ndarray:
    Bv = sym.gather(pencil.B.toarray())
    A0v = sym.gather(pencil.A0.toarray())
    Iv = (sym.rows == sym.cols).astype(float)
    wa = complex(w) * complex(pencil.alpha)
    z = complex(z)
    if wa == 0:
        return (z * Bv)[None, :].astype(complex)
    shifts = pencil.shifts[blocks]
    return z * Bv[None, :] + wa * (A0v[None, :] + shifts[:, None] * Iv[None, :])


def factor(pencil, z: complex, w: complex,
           row_replacements: Optional[dict[int, tuple[int, np.ndarray]]] = None) -> BlockLU:
    """Factor ``z B + w A_k`` for all blocks without pivoting.

    Parameters
    ----------
    pencil : BlockPencil
    z, w : complex
        Shift and weight.
    row_replacements : dict, optional
        ``{block: (row, values)}`` replaces one row of a block's matrix before
        factoring, e.g. to impose a side constraint.  The matching entry of a
        premultiplied right-hand side is then taken as given.

    Raises
    ------
    FactorizationBreakdown
        On a negligible pivot, naming the block, or if ``max |L|`` exceeds 1e6.
    """
    n = pencil.n
    row_replacements = row_replacements or {}
    base = (pencil.B.toarray() != 0) | (pencil.A0.toarray() != 0)
    groups = []
    plain = np.array([i for i in range(n) if i not in row_replacements], dtype=np.int64)
    if plain.size:
        sym = symbolic_factor(base)
        groups.append(_Group(plain, sym, _block_values(pencil, sym, z, w, plain)))
    for blk, (row, vals) in row_replacements.items():
        vals = np.asarray(vals)
        pat = base.copy()
        pat[row, :] = vals != 0
        sym = symbolic_factor(pat)
        dense = z * pencil.block_B() + w * pencil.block_A(blk)
        dense = dense.astype(complex)
        dense[row, :] = vals
        groups.append(_Group(np.array([blk], dtype=np.int64), sym, sym.gather(dense)[None, :]))

    for g in groups:
        s = g.sym
        if logger.isEnabledFor(logging.DEBUG):
            _log_dominance(g)
        bad_b, bad_k = _factor_kernel(g.values, s.diag_pos, s.div_ptr, s.div_pos,
                                      s.upd_ptr, s.upd_t, s.upd_l, s.upd_u, PIVOT_RTOL)
        if bad_b >= 0:
            blk = int(g.blocks[bad_b]) if g.values.shape[0] > 1 else int(g.blocks[0])
            raise FactorizationBreakdown(
                f"zero pivot at step {bad_k} of block {blk} (k = {blk - n // 2}) "
                f"for z={complex(z)}, w={complex(w)}", block=blk, step=int(bad_k))
        lmax = np.max(np.abs(g.values[:, s.l_pos])) if s.l_pos.size else 0.0
        if lmax > MAX_L_ENTRY:
            raise FactorizationBreakdown(f"L factor entry {lmax:.3g} exceeds {MAX_L_ENTRY:g}")
    return BlockLU(pencil, z, w, groups, {b: r for b, (r, _) in row_replacements.items()})


def _log_dominance(g: _Group) -> None:
    s = g.sym
    off = s.rows != s.cols
    for idx, vals in enumerate(g.values):
        offsum = np.zeros(s.m)
        np.add.at(offsum, s.rows[off], np.abs(vals[off]))
        diag = np.abs(vals[s.diag_pos])
        if np.any(diag < offsum):
            blk = int(g.blocks[idx]) if g.values.shape[0] > 1 else "all"
            logger.debug("block %s is not row diagonally dominant", blk)


def solve(lu: BlockLU, pencil, b: np.ndarray, premultiplied: bool = False) -> np.ndarray:
    """Solve ``(z B + w A_k) x_k = B b_k`` for every block.

    This is ``(z I + w L) x = b`` in operator form.  With ``premultiplied=True``
    the right-hand side is taken to be ``B b`` already.
    """
    if lu.pencil is not pencil:
        raise ValueError("factors were computed for a different pencil")
    b = np.asarray(b)
    if b.shape != (pencil.m, pencil.n):
        raise ValueError(f"right-hand side shape {b.shape} does not match {(pencil.m, pencil.n)}")
    rhs = b if premultiplied else pencil.apply_B(b)
    X = np.array(rhs.T, dtype=complex, order="C")
    out = np.empty_like(X)
    for g in lu.groups:
        s = g.sym
        Xg = X[g.blocks]
        _solve_kernel(g.values, Xg, s.diag_pos, s.l_ptr, s.l_row, s.l_pos,
                      s.u_ptr, s.u_col, s.u_pos)
        out[g.blocks] = Xg
    return out.T.copy()


def residual(lu: BlockLU, pencil, x: np.ndarray, b: np.ndarray) -> float:
    """Relative max-norm residual ``|(z B + w A) x - B b| / |B b|`` over all blocks."""
    lhs = lu.z * pencil.apply_B(x) + lu.w * pencil.apply_A(x)
    rhs = pencil.apply_B(b)
    return float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), np.finfo(float).tiny))
