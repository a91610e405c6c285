import numpy as np
import pytest

from dfsphere.dfs import SphereFunction, pole_residual, sphere_l2_norm, symmetry_residual
from dfsphere.fourier_core import GridSpec, coeffs_to_vals
from dfsphere.laplacian import assemble
from dfsphere.phi_functions import ETD_WEIGHTS, CFPhiProvider, EigPhiProvider, phi_scalar
from dfsphere.problems import (
    ProblemSpec, allen_cahn, heat, nls, relative_error, spherical_harmonic,
    spherical_harmonic_function,
)
from dfsphere.timesteppers import (
    ETDRK4, IMEXBDF4, LIRK4, SCHEMES, IncompatibleSchemeError, InstabilityError,
    NonlinearOperator, SchemeConfig, StepState, integrate,
)


def linear(alpha, initial):
    return ProblemSpec("linear", complex(alpha), None, initial)


class ScalarProvider:
    """phi actions for the scalar operator u' = lam u."""

    kind = "scalar"

    def __init__(self, lam, h):
        self.lam, self.h = lam, h

    def prepare(self):
        pass

    def _phi(self, combo, step):
        return sum(c * phi_scalar(l, step * self.lam) for l, c in enumerate(combo) if c)

    def half_step(self, u, v):
        h2 = self.h / 2
        return self._phi((1.0,), h2) * u + h2 * self._phi((0.0, 1.0), h2) * v

    def full_step(self, u, nu, nab, nc):
        h = self.h
        return (self._phi((1.0,), h) * u + h * (self._phi(ETD_WEIGHTS["f1"], h) * nu
                + self._phi(ETD_WEIGHTS["f2"], h) * nab + self._phi(ETD_WEIGHTS["f3"], h) * nc))


def rk4(f, u, h, n):
    for _ in range(n):
        k1 = f(u)
        k2 = f(u + h / 2 * k1)
        k3 = f(u + h / 2 * k2)
        k4 = f(u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u


def test_etdrk4_pure_exponential_step():
    spec = GridSpec(32, 32)
    Y = spherical_harmonic(2, 0, spec)
    for scheme in ("etdrk4-cf", "etdrk4-eig"):
        res = integrate(linear(1.0, heat(2, 0).initial), SchemeConfig(scheme, 0.1, (0, 0.1)), spec)
        assert np.abs(res.final - np.exp(-0.6) * Y).max() <= 1e-8 * np.abs(Y).max()


def scalar_etdrk4(lam, h, u0, T=1.0):
    step = ETDRK4(None, lambda u: u * u, h, ScalarProvider(lam, h))
    u = complex(u0)
    for _ in range(int(round(T / h))):
        u = step.advance(u)
    return u


def test_etdrk4_scalar_surrogate():
    lam, u0 = -10.0, 0.01
    u = scalar_etdrk4(lam, 0.01, u0)
    ref = rk4(lambda v: lam * v + v * v, u0, 1e-5, 100_000)
    assert abs(u - ref) <= 1e-9 * abs(ref)


def test_etdrk4_scalar_order():
    lam, u0 = -10.0, 1.0
    ref = rk4(lambda v: lam * v + v * v, u0, 1e-5, 100_000)
    errs = [abs(scalar_etdrk4(lam, h, u0) - ref) for h in (0.02, 0.01, 0.005)]
    for a, b in zip(errs, errs[1:]):
        assert 16 * 0.7 <= a / b <= 16 * 1.3


def test_etdrk4_semigroup():
    spec = GridSpec(16, 16)
    u0 = spherical_harmonic(3, 1, spec) + 0.1 * spherical_harmonic(5, -2, spec)
    prob = ProblemSpec("linear", 0.05, None, heat(3, 1).initial)
    stepped = integrate(prob, SchemeConfig("etdrk4-cf", 0.05, (0, 0.5)), spec, u0=u0).final
    once = integrate(prob, SchemeConfig("etdrk4-cf", 0.5, (0, 0.5)), spec, u0=u0).final
    assert np.abs(stepped - once).max() <= 1e-10


def test_imex_constant_fixed_point():
    spec = GridSpec(16, 16)
    c = np.zeros(spec.shape, dtype=complex)
    c[8, 8] = 0.7
    res = integrate(linear(0.3, heat(1, 0).initial), SchemeConfig("imex-bdf4", 0.1, (0, 1)), spec, u0=c)
    np.testing.assert_allclose(res.final, c, atol=1e-13)


def test_imex_heat_exact():
    spec = GridSpec(32, 32)
    prob = heat(6, 4)
    assert prob.alpha == pytest.approx(1 / 42)
    res = integrate(prob, SchemeConfig("imex-bdf4", 0.01, (0, 1)), spec)
    assert relative_error(res.final, prob.exact(1.0, spec)) <= 1e-8


def test_imex_startup_history():
    spec = GridSpec(16, 16)
    p = assemble(spec, 0.1)
    N = NonlinearOperator(lambda u: -u**3)
    s = IMEXBDF4(p, N, 0.01)
    s.prepare()
    state = StepState(0.0, spherical_harmonic(2, 1, spec))
    with pytest.raises(RuntimeError):
        s.step(state)
    s.start(state)
    assert len(state.history) == 3 and state.steps == 3
    assert state.t == pytest.approx(0.03)
    s.step(state)
    assert len(state.history) == 3


def lirk4_scalar(lam, h, u):
    """One LIRK4 step on u' = lam u by the stage formulas with scalar algebra."""
    d = 1 - h * lam / 4
    a = u / d
    b = (u + h * lam * a / 2) / d
    c = (u + h * lam * (17 / 50 * a - 1 / 25 * b)) / d
    dd = (u + h * lam * (371 / 1360 * a - 137 / 2720 * b + 15 / 544 * c)) / d
    s = 25 / 24 * a - 49 / 48 * b + 125 / 16 * c - 85 / 12 * dd
    e = (u + h * lam * s) / d
    return u + h * lam * (s + e / 4)


def test_lirk4_scalar_tableau():
    spec = GridSpec(32, 32)
    Y = spherical_harmonic(3, 0, spec)
    res = integrate(linear(1.0, heat(3, 0).initial), SchemeConfig("lirk4", 0.1, (0, 0.1)), spec)
    ref = lirk4_scalar(-12.0, 0.1, 1.0) * Y
    assert np.abs(res.final - ref).max() <= 1e-12 * np.abs(Y).max()


def test_lirk4_is_l_stable():
    assert abs(lirk4_scalar(-1e12, 1.0, 1.0)) < 1e-6


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_state_preserved(scheme):
    spec = GridSpec(16, 16)
    res = integrate(allen_cahn(), SchemeConfig(scheme, 0.01, (0, 0.1)), spec,
                    u0=np.zeros(spec.shape, dtype=complex))
    assert np.all(res.final == 0)


def test_zero_steps_returns_initial():
    spec = GridSpec(16, 16)
    prob = allen_cahn()
    res = integrate(prob, SchemeConfig("lirk4", 0.01, (0.5, 0.5)), spec)
    np.testing.assert_array_equal(res.final, prob.initial_coeffs(spec))
    assert res.steps == 0


def test_allen_cahn_bounded():
    spec = GridSpec(64, 64)
    res = integrate(allen_cahn(), SchemeConfig("etdrk4-cf", 0.01, (0, 1)), spec)
    assert res.steps == 100
    v = coeffs_to_vals(res.final)
    assert np.all(np.isfinite(v)) and np.abs(v).max() <= 1.5


def test_allen_cahn_symmetry_preserved():
    spec = GridSpec(32, 32)
    res = integrate(allen_cahn(), SchemeConfig("lirk4", 0.01, (0, 0.1), snapshot_times=(0.05, 0.1)), spec)
    for d in res.diagnostics.values():
        assert d["symmetry_residual"] <= 1e-8


def test_pole_residual_tracks_resolution():
    # the sin^2 multiplication truncates, so the pole conditions hold to truncation level
    cfg = SchemeConfig("lirk4", 0.01, (0, 0.1))
    r = [pole_residual(integrate(allen_cahn(), cfg, GridSpec(m, m)).final) for m in (64, 128)]
    assert r[1] < 1e-2 * r[0]
    assert r[1] <= 1e-6


def smooth_problem():
    Y21 = spherical_harmonic_function(2, 1).evaluator
    Y30 = spherical_harmonic_function(3, 0).evaluator
    ic = SphereFunction(evaluator=lambda lam, th: 1.6 * Y21(lam, th).real + Y30(lam, th))
    return ProblemSpec("smooth", 0.05, lambda u: u - u**3, ic)


@pytest.mark.parametrize("scheme", ["etdrk4-cf", "imex-bdf4"])
def test_dispersive_rejected(scheme):
    with pytest.raises(IncompatibleSchemeError):
        integrate(nls(), SchemeConfig(scheme, 0.01, (0, 0.1)), GridSpec(16, 16))


def test_step_count_must_be_integral():
    with pytest.raises(ValueError):
        SchemeConfig("lirk4", 0.03, (0, 0.1))
    with pytest.raises(ValueError):
        SchemeConfig("lirk4", -0.1, (0, 1))
    with pytest.raises(ValueError):
        SchemeConfig("rk4", 0.1, (0, 1))
    with pytest.raises(ValueError):
        integrate(allen_cahn(), SchemeConfig("lirk4", 0.1, (0, 1), snapshot_times=(0.25,)), GridSpec(16, 16))


def test_instability_detected():
    blowup = ProblemSpec("blowup", 0.01, lambda u: u**3, heat(2, 0).initial)
    u0 = 50 * spherical_harmonic(2, 0, GridSpec(16, 16))
    with pytest.raises(InstabilityError), np.errstate(over="ignore", invalid="ignore"):
        integrate(blowup, SchemeConfig("lirk4", 0.1, (0, 10)), GridSpec(16, 16), u0=u0)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_heat_norm_decays(scheme):
    spec = GridSpec(16, 16)
    times = tuple(np.round(np.arange(0, 0.55, 0.05), 10))
    res = integrate(heat(3), SchemeConfig(scheme, 0.05, (0, 0.5), snapshot_times=times), spec)
    norms = [sphere_l2_norm(res.snapshots[t]) for t in times]
    assert all(b < a for a, b in zip(norms, norms[1:]))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_residuals_stay_small(scheme):
    spec = GridSpec(64, 64)
    times = (0.1, 0.2, 0.3)
    res = integrate(smooth_problem(), SchemeConfig(scheme, 0.01, (0, 0.3), snapshot_times=times), spec)
    for t in times:
        assert pole_residual(res.snapshots[t]) <= 1e-8
        assert symmetry_residual(res.snapshots[t]) <= 1e-8


def test_fft_counts_per_step():
    spec = GridSpec(16, 16)
    counts = {}
    for scheme in SCHEMES:
        res = integrate(allen_cahn(), SchemeConfig(scheme, 0.01, (0, 0.1)), spec)
        counts[scheme] = res.fft_count / res.steps
    assert counts["etdrk4-cf"] == counts["etdrk4-eig"] == 8
    assert counts["lirk4"] == 12
    # three ETDRK4 startup steps then one evaluation per step
    assert counts["imex-bdf4"] == pytest.approx((3 * 8 + 7 * 2) / 10)


def test_cf_solve_budget():
    spec = GridSpec(16, 16)
    p = assemble(spec, 0.01)
    prov = CFPhiProvider(p, 0.01)
    s = ETDRK4(p, NonlinearOperator(lambda u: u - u**3), 0.01, prov)
    s.prepare()
    s.advance(allen_cahn().initial_coeffs(spec))
    assert prov.solves == 4 * 12


def test_schemes_agree_on_allen_cahn():
    spec = GridSpec(32, 32)
    finals = {s: integrate(allen_cahn(), SchemeConfig(s, 0.01, (0, 0.2)), spec).final for s in SCHEMES}
    ref = finals["etdrk4-eig"]
    for s, u in finals.items():
        assert relative_error(u, ref) <= 1e-5, s


def test_deterministic():
    spec = GridSpec(16, 16)
    cfg = SchemeConfig("lirk4", 0.01, (0, 0.1))
    a = integrate(allen_cahn(), cfg, spec).final
    b = integrate(allen_cahn(), cfg, spec).final
    np.testing.assert_array_equal(a, b)


def test_pencil_mismatch_rejected():
    spec = GridSpec(16, 16)
    with pytest.raises(ValueError):
        integrate(allen_cahn(), SchemeConfig("lirk4", 0.01, (0, 0.1)), spec, pencil=assemble(spec, 0.5))


def test_eig_provider_used_for_dispersive():
    spec = GridSpec(16, 16)
    p = assemble(spec, 1j)
    s = ETDRK4(p, NonlinearOperator(None), 0.1, EigPhiProvider(p, 0.1))
    assert s.name == "etdrk4-eig"
    assert isinstance(LIRK4(p, NonlinearOperator(None), 0.1), LIRK4)


def halving_ratio(prob, scheme, h, T, spec):
    ref = integrate(prob, SchemeConfig("etdrk4-eig", h / 4, (0, T)), spec).final
    e1 = relative_error(integrate(prob, SchemeConfig(scheme, h, (0, T)), spec).final, ref)
    e2 = relative_error(integrate(prob, SchemeConfig(scheme, h / 2, (0, T)), spec).final, ref)
    return e1 / e2


def test_etdrk4_allen_cahn_halving():
    assert 16 * 0.7 <= halving_ratio(allen_cahn(), "etdrk4-cf", 0.025, 0.5, GridSpec(64, 64)) <= 16 * 1.3


def test_lirk4_nls_halving():
    assert 16 * 0.7 <= halving_ratio(nls(), "lirk4", 0.0125, 0.25, GridSpec(64, 64)) <= 16 * 1.3
