import numpy as np
import pytest

ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}: {title} [{detail}]")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dft_coeffs(v):
    """O(m^2 n^2) direct evaluation of the doubled-grid Fourier coefficients."""
    m, n = v.shape
    theta = -np.pi + 2 * np.pi * np.arange(m) / m
    lam = -np.pi + 2 * np.pi * np.arange(n) / n
    j = np.arange(-m // 2, m // 2)
    k = np.arange(-n // 2, n // 2)
    Et = np.exp(-1j * np.outer(j, theta))
    El = np.exp(-1j * np.outer(lam, k))
    return Et @ v @ El / (m * n)


def dft_values(c):
    m, n = c.shape
    theta = -np.pi + 2 * np.pi * np.arange(m) / m
    lam = -np.pi + 2 * np.pi * np.arange(n) / n
    j = np.arange(-m // 2, m // 2)
    k = np.arange(-n // 2, n // 2)
    return np.exp(1j * np.outer(theta, j)) @ c @ np.exp(1j * np.outer(k, lam))


def composed_multiplier(m, first_row):
    """Q M(:, 3:m+3) P with M the Hermitian Toeplitz matrix whose first row is ``first_row``."""
    import scipy.linalg

    from dfsphere.fourier_core import projection_maps

    r = np.zeros(m + 5, dtype=complex)
    r[: len(first_row)] = first_row
    M = scipy.linalg.toeplitz(np.conj(r), r)[:, 2: m + 3]
    maps = projection_maps(m)
    return maps.Q_mult @ M @ maps.P.toarray()


def dense_laplacian(m, n, alpha=1.0):
    """nm x nm Laplacian assembled with Kronecker products from the composed matrices."""
    Ts = composed_multiplier(m, [0.5, 0, -0.25]).real
    Tc = composed_multiplier(m, [0, 0, 0.25j])
    D1 = np.diag(1j * np.r_[0, np.arange(-m // 2 + 1, m // 2)])
    D2 = np.diag(-np.arange(-m // 2, m // 2) ** 2.0)
    D2n = np.diag(-np.arange(-n // 2, n // 2) ** 2.0)
    Tinv = np.linalg.inv(Ts)
    L = np.kron(np.eye(n), D2 + Tinv @ Tc @ D1) + np.kron(D2n, Tinv)
    return alpha * L


def vec(c):
    return np.asarray(c).flatten(order="F")


def unvec(x, m, n):
    return np.asarray(x).reshape((m, n), order="F")
