import numpy as np
import pytest
from conftest import dense_laplacian, unvec, vec

from dfsphere.fourier_core import GridSpec, InvalidGridError
from dfsphere.laplacian import apply, assemble, msin2_cluster_eigs, spectral_diagnostics
from dfsphere.mult_matrices import build_Tsin2
from dfsphere.problems import spherical_harmonic


def test_constant_is_annihilated():
    p = assemble(GridSpec(16, 16))
    c = np.zeros((16, 16), dtype=complex)
    c[8, 8] = 1
    assert np.abs(apply(p, c)).max() < 1e-13


@pytest.mark.parametrize("l,order", [(2, 1), (4, 0), (4, 2)])
def test_spherical_harmonic_eigenfunctions(l, order):
    spec = GridSpec(32, 32)
    Y = spherical_harmonic(l, order, spec)
    LY = apply(assemble(spec), Y)
    assert np.abs(LY + l * (l + 1) * Y).max() <= 1e-10 * np.abs(Y).max() * l * (l + 1)


def test_eigenfunction_property_up_to_quarter_resolution():
    spec = GridSpec(64, 64)
    p = assemble(spec)
    for l in range(0, 17, 4):
        for order in {0, l // 2, l}:
            Y = spherical_harmonic(l, order, spec)
            err = np.abs(apply(p, Y) + l * (l + 1) * Y).max() / max(l * (l + 1), 1)
            assert err <= 1e-8 * np.abs(Y).max()


def test_apply_matches_dense_oracle(rng):
    m = n = 8
    p = assemble(GridSpec(m, n), 0.7)
    c = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    ref = unvec(dense_laplacian(m, n, 0.7) @ vec(c), m, n)
    np.testing.assert_allclose(apply(p, c), ref, atol=1e-12 * np.abs(ref).max())


def test_block_structure():
    p = assemble(GridSpec(16, 16))
    A = p.A0.toarray()
    rows, cols = np.nonzero(A)
    off = (cols - rows) % 16
    assert set(np.unique(np.abs(cols - rows))) <= {0, 2, 14}
    assert np.all(off % 2 == 0)
    np.testing.assert_array_equal(p.B.toarray(), build_Tsin2(16).toarray())
    assert p.shifts[8] == 0 and p.shifts[0] == -64


def test_block_independence(rng):
    p = assemble(GridSpec(16, 16))
    c = rng.standard_normal((16, 16)) + 0j
    perm = rng.permutation(16)
    out = apply(p, c)
    q = assemble(GridSpec(16, 16))
    q.shifts = q.shifts[perm]
    out_perm = apply(q, c[:, perm])
    np.testing.assert_array_equal(out_perm[:, np.argsort(perm)], out)


def test_assemble_rejects_small_grid():
    with pytest.raises(InvalidGridError):
        assemble(GridSpec(6, 8))


@pytest.mark.parametrize("m", [8, 16, 32])
def test_eigenvalues_real_nonpositive(m):
    rep = spectral_diagnostics(assemble(GridSpec(m, m)))
    assert rep.all_real and rep.all_nonpositive


def test_diagnostics_size_guard():
    with pytest.raises(ValueError):
        spectral_diagnostics(assemble(GridSpec(256, 8)))


def test_msin2_cluster_eigs():
    ev = msin2_cluster_eigs(6)
    assert np.any(np.isclose(ev, 0.5 * (np.cos(np.pi / 4) + 1)))
    m = 8
    T = np.diag(np.full(m + 1, 0.5)) - 0.25 * (np.eye(m + 1, k=2) + np.eye(m + 1, k=-2))
    np.testing.assert_allclose(np.linalg.eigvalsh(T), msin2_cluster_eigs(m), atol=1e-12)
    # smallest value is (1 - cos(pi/N))/2 with N = m/2 + 2, i.e. about pi^2 / (4 N^2)
    m = 200
    assert msin2_cluster_eigs(m)[0] == pytest.approx(np.pi**2 / (4 * (m / 2 + 2) ** 2), rel=1e-3)


def test_tsin2_inverse_norm_quadratic():
    norms = {m: 1 / np.linalg.svd(build_Tsin2(m).toarray(), compute_uv=False)[-1] for m in (16, 64)}
    C = norms[16] / 16**2
    assert norms[64] <= 2 * C * 64**2
