"""Fourth-order time steppers for ``u_t = L u + N(u)`` in doubled coefficient space.

Four schemes are available:

``etdrk4-cf``
    Cox-Matthews ETDRK4 with phi actions from CF shifted solves (diffusive only).
``etdrk4-eig``
    The same scheme with phi matrices from per-block eigendecompositions.
``imex-bdf4``
    Fourth-order BDF for ``L`` with fourth-order extrapolation for ``N``,
    started with three ETDRK4-CF steps (diffusive only).
``lirk4``
    A five-stage L-stable implicit/explicit Runge-Kutta method.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dfs import pole_residual, symmetry_residual
from .fourier_core import GridSpec, coeffs_to_vals, vals_to_coeffs
from .laplacian import BlockPencil, assemble
from .phi_functions import CFPhiProvider, EigPhiProvider

logger = logging.getLogger(__name__)

SCHEMES = ("etdrk4-cf", "etdrk4-eig", "imex-bdf4", "lirk4")
DIFFUSIVE_ONLY = ("etdrk4-cf", "imex-bdf4")


class IncompatibleSchemeError(ValueError):
    """The scheme cannot be used for this operator."""


class InstabilityError(FloatingPointError):
    """The solution became non-finite."""


@dataclass(frozen=True)
class SchemeConfig:
    """Which scheme to run, with what step, over which interval.

    Parameters
    ----------
    scheme : str
        One of :data:`SCHEMES`.
    h : float
        Time step; ``t_span`` must contain an integral number of steps.
    t_span : tuple of float
        ``(t0, T)``.
    snapshot_times : tuple of float
        Times at which to keep a copy of the solution.
    cf_poles : int
        Pole count of the CF approximant (10, 12 or 14).
    contour_points : int
        Contour points for the eigen-based phi values.
    """

    scheme: str
    h: float
    t_span: tuple[float, float] = (0.0, 1.0)
    snapshot_times: tuple[float, ...] = ()
    cf_poles: int = 12
    contour_points: int = 32

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if not self.h > 0:
            raise ValueError(f"time step must be positive, got {self.h!r}")
        t0, T = self.t_span
        if T < t0:
            raise ValueError(f"final time {T} precedes start time {t0}")
        self.n_steps  # validates the step count

    @property
    def n_steps(self) -> int:
        t0, T = self.t_span
        k = int(round((T - t0) / self.h))
        if abs(k * self.h - (T - t0)) > 1e-9 * max(1.0, abs(T - t0)):
            raise ValueError(f"t_span {self.t_span} is not an integral number of steps of {self.h}")
        return k

    def check_operator(self, pencil: BlockPencil) -> None:
        if pencil.is_dispersive and self.scheme in DIFFUSIVE_ONLY:
            raise IncompatibleSchemeError(
                f"{self.scheme} is unstable for dispersive operators (imaginary alpha); "
                "use etdrk4-eig or lirk4")


class NonlinearOperator:
    """``N(c)``: transform to values, apply ``g`` pointwise, transform back.

    Parameters
    ----------
    g : callable or None
        Pointwise map on complex value arrays; ``None`` means ``N = 0``.
    dealias : bool
        Zero the upper third of both wavenumber ranges after evaluation.
    """

    def __init__(self, g: Optional[Callable[[np.ndarray], np.ndarray]], dealias: bool = False):
        self.g = g
        self.dealias = dealias
        self.ffts = 0

    @property
    def is_zero(self) -> bool:
        return self.g is None

    def __call__(self, c: np.ndarray) -> np.ndarray:
        if self.g is None:
            return np.zeros_like(c)
        self.ffts += 2
        out = vals_to_coeffs(self.g(coeffs_to_vals(c)))
        if self.dealias:
            out = _truncate_two_thirds(out)
        return out


def _truncate_two_thirds(c: np.ndarray) -> np.ndarray:
    m, n = c.shape
    j = np.abs(np.arange(m) - m // 2)
    k = np.abs(np.arange(n) - n // 2)
    keep = (j[:, None] <= m // 3) & (k[None, :] <= n // 3)
    return np.where(keep, c, 0)


@dataclass
class StepState:
    """Current solution plus the multistep history ``(u, N(u))``, newest first."""

    t: float
    u: np.ndarray
    steps: int = 0
    history: deque = field(default_factory=lambda: deque(maxlen=3))


class Scheme:
    """Base class: subclasses implement :meth:`prepare` and :meth:`step`."""

    name = ""

    def __init__(self, pencil: BlockPencil, N: NonlinearOperator, h: float):
        self.pencil = pencil
        self.N = N
        self.h = float(h)

    def prepare(self) -> None:
        """Precompute factorizations or phi data."""

    def step(self, state: StepState) -> None:
        raise NotImplementedError


class ETDRK4(Scheme):
    """Cox-Matthews ETDRK4 using a phi provider for the stage operators."""

    def __init__(self, pencil, N, h, provider):
        super().__init__(pencil, N, h)
        self.provider = provider
        self.name = f"etdrk4-{provider.kind}"

    def prepare(self):
        self.provider.prepare()

    def advance(self, u, nu=None):
        P, N = self.provider, self.N
        if nu is None:
            nu = N(u)
        a = P.half_step(u, nu)
        na = N(a)
        b = P.half_step(u, na)
        nb = N(b)
        c = P.half_step(a, 2 * nb - nu)
        nc = N(c)
        return P.full_step(u, nu, na + nb, nc)

    def step(self, state):
        state.u = self.advance(state.u)


class IMEXBDF4(Scheme):
    """IMEX-BDF4; the first three steps are taken with ETDRK4-CF."""

    name = "imex-bdf4"

    def __init__(self, pencil, N, h, cf_poles: int = 12):
        super().__init__(pencil, N, h)
        self.starter = ETDRK4(pencil, N, h, CFPhiProvider(pencil, h, cf_poles))

    def prepare(self):
        self.lu = self.pencil.factor(25.0, -12.0 * self.h)
        self.starter.prepare()

    def start(self, state: StepState) -> None:
        """Fill the history with three ETDRK4-CF steps."""
        while len(state.history) < 3:
            self._startup_step(state)

    def _startup_step(self, state):
        nu = self.N(state.u)
        state.history.appendleft((state.u, nu))
        state.u = self.starter.advance(state.u, nu)
        state.t += self.h
        state.steps += 1

    def step(self, state):
        if len(state.history) < 3:
            raise RuntimeError("IMEX-BDF4 history is not initialised; call start() first")
        h = self.h
        u0, n0 = state.u, self.N(state.u)
        (u1, n1), (u2, n2), (u3, n3) = state.history
        rhs = (48 * u0 - 36 * u1 + 16 * u2 - 3 * u3
               + h * (48 * n0 - 72 * n1 + 48 * n2 - 12 * n3))
        state.history.appendleft((u0, n0))
        state.u = self.lu.solve(rhs)


class LIRK4(Scheme):
    """Five-stage L-stable IMEX Runge-Kutta scheme.

    All stage equations are premultiplied by ``B``, so the stage solves use
    ``(B - h/4 A_k)`` and the final ``L`` application needs one solve with ``B``.
    """

    name = "lirk4"

    def prepare(self):
        self.lu = self.pencil.factor(1.0, -0.25 * self.h)
        self.pencil.factor(1.0, 0.0)

    def step(self, state):
        h, N, pen = self.h, self.N, self.pencil
        A, B = pen.apply_A, pen.apply_B
        solve = self.lu.solve
        v = state.u
        nv = N(v)
        w = B(v)
        a = solve(w + h * B(0.25 * nv), premultiplied=True)
        na = N(a)
        b = solve(w + h * A(0.5 * a) + h * B(-0.25 * nv + na), premultiplied=True)
        nb = N(b)
        c = solve(w + h * A(17 / 50 * a - 1 / 25 * b)
                  + h * B(-13 / 100 * nv + 43 / 75 * na + 8 / 75 * nb), premultiplied=True)
        nc = N(c)
        d = solve(w + h * A(371 / 1360 * a - 137 / 2720 * b + 15 / 544 * c)
                  + h * B(-6 / 85 * nv + 42 / 85 * na + 179 / 1360 * nb - 15 / 272 * nc),
                  premultiplied=True)
        nd = N(d)
        s = 25 / 24 * a - 49 / 48 * b + 125 / 16 * c - 85 / 12 * d
        e = solve(w + h * A(s) + h * B(79 / 24 * na - 5 / 8 * nb + 25 / 2 * nc - 85 / 6 * nd),
                  premultiplied=True)
        ne = N(e)
        state.u = (v + h * pen.solve_B(A(s + 0.25 * e))
                   + h * (25 / 24 * na - 49 / 48 * nb + 125 / 16 * nc - 85 / 12 * nd + 0.25 * ne))


def make_scheme(config: SchemeConfig, pencil: BlockPencil, N: NonlinearOperator) -> Scheme:
    config.check_operator(pencil)
    h = config.h
    if config.scheme == "etdrk4-cf":
        return ETDRK4(pencil, N, h, CFPhiProvider(pencil, h, config.cf_poles))
    if config.scheme == "etdrk4-eig":
        return ETDRK4(pencil, N, h, EigPhiProvider(pencil, h, config.contour_points))
    if config.scheme == "imex-bdf4":
        return IMEXBDF4(pencil, N, h, config.cf_poles)
    return LIRK4(pencil, N, h)


@dataclass
class IntegrationResult:
    """Output of :func:`integrate`.

    ``wall_time`` covers the stepping loop only; ``precompute_time`` covers
    factorizations and phi data.
    """

    final: np.ndarray
    t: float
    steps: int
    snapshots: dict[float, np.ndarray]
    wall_time: float
    precompute_time: float
    fft_count: int
    diagnostics: dict[float, dict[str, float]]


def integrate(problem, scheme: SchemeConfig, spec: GridSpec,
              pencil: Optional[BlockPencil] = None, u0: Optional[np.ndarray] = None,
              dealias: bool = False, check_every: int = 1) -> IntegrationResult:
    """Integrate ``problem`` over ``scheme.t_span``.

    Parameters
    ----------
    problem : ProblemSpec-like
        Needs ``alpha``, ``nonlinearity`` and ``initial_coeffs(spec)``.
    scheme : SchemeConfig
    spec : GridSpec
    pencil : BlockPencil, optional
        Reuse an assembled pencil (and its cached factors).
    u0 : ndarray, optional
        Override the initial coefficients.
    check_every : int
        Check for non-finite values every this many steps.

    Raises
    ------
    IncompatibleSchemeError, InstabilityError
    """
    if pencil is None:
        pencil = assemble(spec, problem.alpha)
    elif complex(pencil.alpha) != complex(problem.alpha) or pencil.spec != spec:
        raise ValueError("pencil does not match the problem and grid")
    scheme.check_operator(pencil)
    u = problem.initial_coeffs(spec) if u0 is None else np.asarray(u0, dtype=complex)
    N = NonlinearOperator(problem.nonlinearity, dealias=dealias)
    stepper = make_scheme(scheme, pencil, N)

    t0, T = scheme.t_span
    nsteps = scheme.n_steps
    want = {}
    for ts in scheme.snapshot_times:
        k = int(round((ts - t0) / scheme.h))
        if not 0 <= k <= nsteps or abs(t0 + k * scheme.h - ts) > 1e-9 * max(1.0, abs(ts)):
            raise ValueError(f"snapshot time {ts} is not on the step grid")
        want[k] = ts

    tic = time.perf_counter()
    if nsteps:
        stepper.prepare()
    precompute = time.perf_counter() - tic

    state = StepState(t0, u.copy())
    snaps, diags = {}, {}

    def record(k):
        if k in want:
            snaps[want[k]] = state.u.copy()
            diags[want[k]] = {"pole_residual": pole_residual(state.u),
                              "symmetry_residual": symmetry_residual(state.u)}

    record(0)
    tic = time.perf_counter()
    while state.steps < nsteps:
        if isinstance(stepper, IMEXBDF4) and len(state.history) < 3:
            stepper._startup_step(state)
        else:
            stepper.step(state)
            state.steps += 1
            state.t = t0 + state.steps * scheme.h
        if state.steps % check_every == 0 and not np.all(np.isfinite(state.u)):
            raise InstabilityError(f"non-finite solution at step {state.steps} (t = {state.t:g})")
        record(state.steps)
    wall = time.perf_counter() - tic
    state.t = t0 + nsteps * scheme.h
    logger.info("%s: %d steps in %.3fs (precompute %.3fs, %d FFTs)",
                stepper.name, nsteps, wall, precompute, N.ffts)
    return IntegrationResult(state.u, state.t, nsteps, snaps, wall, precompute, N.ffts, diags)
