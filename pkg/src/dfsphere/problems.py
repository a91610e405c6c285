"""Built-in PDEs, spherical harmonics, the Poisson solver and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dfs import SphereFunction, latitude_weights, restrict, sphere_l2_norm
from .fourier_core import GridSpec, InvalidGridError, coeffs_to_vals, vals_to_coeffs
from .laplacian import assemble
from .timesteppers import SchemeConfig, integrate


@dataclass(frozen=True)
class ProblemSpec:
    """``u_t = alpha * Laplacian(u) + g(u)`` with an initial condition.

    Attributes
    ----------
    name : str
    alpha : complex
        Diffusion coefficient; an imaginary part makes the problem dispersive.
    nonlinearity : callable or None
        Pointwise ``g`` on complex value arrays.
    initial : SphereFunction
    exact : callable, optional
        ``exact(t, spec)`` returning doubled coefficients of the exact solution.
    params : dict
        Parameters that define the problem, for manifests.
    """

    name: str
    alpha: complex
    nonlinearity: Optional[Callable[[np.ndarray], np.ndarray]]
    initial: SphereFunction
    exact: Optional[Callable[[float, GridSpec], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nonlinearity is not None:
            with np.errstate(all="ignore"):
                g0 = np.asarray(self.nonlinearity(np.zeros(1, dtype=complex)))
            if not np.all(np.isfinite(g0)):
                raise ValueError(f"nonlinearity of {self.name!r} is not finite at u = 0")

    @property
    def classification(self) -> str:
        return "dispersive" if complex(self.alpha).imag != 0 else "diffusive"

    def initial_coeffs(self, spec: GridSpec) -> np.ndarray:
        return self.initial.on_grid(spec)


def _legendre_normalized(l: int, order: int, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Unit-normalized associated Legendre function (no Condon-Shortley phase).

    ``x = cos(theta)`` and ``s = sin(theta) >= 0``.  Normalized so that
    ``|P|^2`` integrates over the sphere (with ``e^{i m lam}``) to one.
    """
    mm = order
    # P_mm = sqrt((2m+1)/(4 pi) * prod_{k=1}^m (2k-1)/(2k)) * s^m, built incrementally
    p = np.full_like(x, math.sqrt(1.0 / (4 * math.pi)))
    for k in range(1, mm + 1):
        p = p * math.sqrt((2 * k + 1) / (2 * k)) * s
    if l == mm:
        return p
    p_prev, p = p, math.sqrt(2 * mm + 3) * x * p
    for ll in range(mm + 2, l + 1):
        a = math.sqrt((4 * ll * ll - 1) / (ll * ll - mm * mm))
        b = math.sqrt(((ll - 1) ** 2 - mm * mm) / (4 * (ll - 1) ** 2 - 1))
        p_prev, p = p, a * (x * p - b * p_prev)
    return p


def spherical_harmonic_function(l: int, order: int) -> SphereFunction:
    """``Y_l^order`` as a pointwise sphere function (unit L2 norm, ``Y_l^{-m} = conj(Y_l^m)``)."""
    if l < 0 or abs(order) > l:
        raise ValueError(f"need 0 <= |order| <= l, got l={l}, order={order}")
    mm = abs(order)

    def ev(lam, theta):
        p = _legendre_normalized(l, mm, np.cos(theta), np.sin(theta))
        return p * np.exp(1j * order * lam)

    return SphereFunction(evaluator=ev)


def spherical_harmonic(l: int, order: int, spec: GridSpec) -> np.ndarray:
    """Doubled coefficients of ``Y_l^order`` on ``spec``."""
    if l > spec.m // 2 - 2 or l > spec.n // 2 - 2:
        raise InvalidGridError(f"Y_{l} is not resolved on a {spec.m} x {spec.n} grid")
    return spherical_harmonic_function(l, order).on_grid(spec)


def zero_mean_row(m: int) -> np.ndarray:
    """Coefficients of the discrete mean functional acting on the ``k = 0`` column."""
    return 2 * np.pi * latitude_weights(m)


def solve_poisson(f: np.ndarray) -> np.ndarray:
    """Solve ``Laplacian(u) = f`` with ``mean(u) = 0``.

    Each block is solved with ``z = 0, w = 1``; in the ``k = 0`` block the
    ``j = 0`` row is replaced by the zero-mean functional with zero right-hand side.
    """
    f = np.asarray(f, dtype=complex)
    m, n = f.shape
    pencil = assemble(GridSpec(m, n), 1.0)
    from .linsolve import factor

    blk, row = n // 2, m // 2
    lu = factor(pencil, 0.0, 1.0, row_replacements={blk: (row, zero_mean_row(m))})
    rhs = pencil.apply_B(f)
    rhs[row, blk] = 0.0
    return lu.solve(rhs, premultiplied=True)


def _sphere_xyz(lam, theta):
    st = np.sin(theta)
    return np.cos(lam) * st, np.sin(lam) * st, np.cos(theta)


def allen_cahn(epsilon: float = 1e-2) -> ProblemSpec:
    def u0(lam, theta):
        x, y, z = _sphere_xyz(lam, theta)
        return np.cos(np.cosh(5 * x * z) - 10 * y)

    return ProblemSpec("allen-cahn", complex(epsilon), lambda u: u - u**3,
                       SphereFunction(evaluator=u0), params={"epsilon": epsilon})


def nls(A: float = 1.0, B: float = 1.0) -> ProblemSpec:
    y33 = spherical_harmonic_function(3, 3).evaluator

    def u0(lam, theta):
        breather = A * (2 * B**2 / (2 - np.sqrt(2) * np.sqrt(2 - B**2) * np.cos(A * B * theta)) - 1)
        return breather + y33(lam, theta)

    return ProblemSpec("nls", 1j, lambda u: 1j * np.abs(u) ** 2 * u,
                       SphereFunction(evaluator=u0), params={"A": A, "B": B})


def ginzburg_landau(angle: float = np.pi / 8) -> ProblemSpec:
    c, s = math.cos(angle), math.sin(angle)

    def u0(lam, theta):
        x, y, z = _sphere_xyz(lam, theta)
        xr, yr, zr = c * x - s * z, y, s * x + c * z
        return (np.cos(40 * xr) + np.cos(40 * yr) + np.cos(40 * zr)) / 3

    return ProblemSpec("ginzburg-landau", 1e-4, lambda u: u - (1 + 1.5j) * u * np.abs(u) ** 2,
                       SphereFunction(evaluator=u0), params={"angle": angle})


def heat(l: int = 4, order: Optional[int] = None, alpha: Optional[complex] = None,
         reaction: complex = 0.0) -> ProblemSpec:
    """``u_t = alpha Laplacian(u) + reaction * u`` from ``Y_l^order``.

    The default ``alpha = 1/(l(l+1))`` makes the exact solution ``exp(-t) Y``.
    """
    order = l if order is None else order
    alpha = 1.0 / (l * (l + 1)) if alpha is None else alpha
    rate = -complex(alpha) * l * (l + 1) + reaction
    g = None if reaction == 0 else (lambda u: reaction * u)
    Y = spherical_harmonic_function(l, order)

    def exact(t, spec):
        return np.exp(rate * t) * Y.on_grid(spec)

    return ProblemSpec("heat", complex(alpha), g, Y, exact,
                       params={"l": l, "order": order, "reaction": reaction})


BUILTINS = {
    "allen-cahn": allen_cahn,
    "nls": nls,
    "ginzburg-landau": ginzburg_landau,
    "heat": heat,
}


def builtin(name: str, **params) -> ProblemSpec:
    """Look up a built-in problem by name; keyword arguments are forwarded (e.g. ``l`` for heat)."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(BUILTINS)}") from None
    return factory(**params)


def relative_error(u: np.ndarray, u_ref: np.ndarray) -> float:
    """Relative L2 error on the sphere, ``||u - u_ref|| / ||u_ref||``."""
    ref = sphere_l2_norm(u_ref)
    if ref == 0:
        raise ZeroDivisionError("reference solution has zero norm")
    return sphere_l2_norm(np.asarray(u) - np.asarray(u_ref)) / ref


def sphere_values(c: np.ndarray) -> np.ndarray:
    """Values of the doubled coefficients on the grid rows with ``theta`` in ``[0, pi]``."""
    return restrict(coeffs_to_vals(c))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass(frozen=True)
class ConvergenceRow:
    scheme: str
    h: float
    h_over_T: float
    error: float
    wall_seconds: float
    precompute_seconds: float


def convergence_study(problem: ProblemSpec, schemes: Sequence[str], hs: Sequence[float],
                      spec: GridSpec, t_span=(0.0, 1.0), reference: Optional[np.ndarray] = None,
                      use_exact: bool = False) -> tuple[list[ConvergenceRow], dict[str, float]]:
    """Errors and timings for each scheme and step size.

    The reference solution is, in order of preference: ``reference`` if given,
    the exact solution if ``use_exact`` and the problem has one, otherwise an
    ETDRK4-EIG run at half the smallest step.

    Returns
    -------
    rows : list of ConvergenceRow
        Sorted by scheme then step size.
    slopes : dict
        Least-squares log-log slope of error against ``h`` per scheme.
    """
    T = t_span[1] - t_span[0]
    pencil = assemble(spec, problem.alpha)
    if reference is None:
        if use_exact and problem.exact is not None:
            reference = problem.exact(t_span[1], spec)
        else:
            cfg = SchemeConfig("etdrk4-eig", min(hs) / 2, tuple(t_span))
            reference = integrate(problem, cfg, spec, pencil=pencil).final
    rows = []
    for name in sorted(schemes):
        for h in sorted(hs):
            cfg = SchemeConfig(name, h, tuple(t_span))
            res = integrate(problem, cfg, spec, pencil=pencil)
            rows.append(ConvergenceRow(name, h, h / T, relative_error(res.final, reference),
                                       res.wall_time, res.precompute_time))
    slopes = {}
    for name in sorted(schemes):
        sel = [r for r in rows if r.scheme == name]
        slopes[name] = loglog_slope([r.h for r in sel], [r.error for r in sel])
    return rows, slopes


def evaluate_pointwise(g: Callable, values: np.ndarray) -> np.ndarray:
    """Apply ``g`` through a value/coefficient round trip, as the time steppers do."""
    return coeffs_to_vals(vals_to_coeffs(g(values)))


__all__ = [
    "ProblemSpec", "spherical_harmonic", "spherical_harmonic_function", "solve_poisson",
    "builtin", "relative_error", "convergence_study", "ConvergenceRow", "loglog_slope",
    "zero_mean_row", "sphere_values", "allen_cahn", "nls", "ginzburg_landau", "heat",
]
