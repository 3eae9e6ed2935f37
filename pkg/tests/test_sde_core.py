import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ldlangevin import (DriftFamily, DriftSpec, InvalidParameterError, InvalidRegimeError,
                        ModelParams, drift_eval, scaling_exponents, simulate_path)
from ldlangevin.sde import (SamplePath, area_functional, euler_maruyama, read_path_csv,
                            scaled_noise_amplitude, simulate_ensemble, simulate_scaled,
                            write_path_csv)

kappas = st.floats(0.05, 1.0)
xs = st.floats(-50, 50, allow_nan=False)


# -- drift families -------------------------------------------------------------

@pytest.mark.parametrize("family,kappa,eps,x,expected", [
    ("ExactD", 0.5, 0.0, 4.0, -2.0),
    ("MollifiedUEps", 0.5, 1.0, 0.5, -0.5),
    ("OneSidedLowerUEps", 0.5, 0.2, -3.0, -0.2 ** 0.5),
    ("AuxUpperUEps", 0.5, 0.3, -0.5, 0.5 ** 1.5),
])
def test_drift_examples(family, kappa, eps, x, expected):
    assert drift_eval(DriftSpec(family, kappa, eps), x) == pytest.approx(expected, rel=1e-14)


def test_drift_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        drift_eval(DriftSpec.exact(0.5), math.inf)
    with pytest.raises(InvalidParameterError):
        DriftSpec("Nope", 0.5)
    with pytest.raises(InvalidParameterError):
        DriftSpec(DriftFamily.MOLLIFIED, 0.5, 0.0)
    with pytest.raises(InvalidParameterError):
        DriftSpec.exact(1.5)


def test_scalar_matches_vectorised():
    grid = np.linspace(-3, 3, 2001)
    for fam in DriftFamily:
        spec = DriftSpec(fam, 0.6, 0.3)
        f = spec.scalar()
        assert np.allclose([f(float(x)) for x in grid], spec.value(grid), rtol=1e-14, atol=0)


@given(kappas, st.floats(0.01, 0.99), xs)
def test_odd_symmetry(kappa, eps, x):
    for spec in (DriftSpec.exact(kappa), DriftSpec(DriftFamily.MOLLIFIED, kappa, eps)):
        assert spec.value(-x) == -spec.value(x)


@given(kappas, st.floats(0.01, 0.99), st.floats(0, 50))
def test_dominance_nonnegative_axis(kappa, eps, x):
    d = DriftSpec.exact(kappa).value(x)
    tol = 1e-12 * (1 + abs(d))
    assert DriftSpec(DriftFamily.MOLLIFIED, kappa, eps).value(x) >= d - tol
    assert DriftSpec(DriftFamily.ONE_SIDED, kappa, eps).value(x) <= d + tol
    assert DriftSpec(DriftFamily.AUX_UPPER, kappa, eps).value(x) >= d - tol


@given(kappas, st.floats(0.01, 0.99), xs)
def test_aux_lower_below_exact(kappa, eps, x):
    d = DriftSpec.exact(kappa).value(x)
    assert DriftSpec(DriftFamily.AUX_LOWER, kappa, eps).value(x) <= d + 1e-12 * (1 + abs(d))


@given(kappas, st.floats(0.01, 0.99))
def test_continuity_joins(kappa, eps):
    h = 1e-10
    for fam, joins in ((DriftFamily.MOLLIFIED, (eps, -eps)), (DriftFamily.ONE_SIDED, (eps,)),
                       (DriftFamily.AUX_LOWER, (eps,)),
                       (DriftFamily.AUX_UPPER, (eps, 0.0, -1.0))):
        spec = DriftSpec(fam, kappa, eps)
        for c in joins:
            assert spec.value(c - h) == pytest.approx(spec.value(c + h), abs=1e-6)


@given(kappas, st.floats(0.01, 0.99), st.floats(-3, 3))
def test_derivative_and_antiderivative(kappa, eps, x):
    for fam in DriftFamily:
        spec = DriftSpec(fam, kappa, eps)
        if min(abs(x - b) for b in spec.breakpoints() + [0.0]) < 1e-3:
            continue
        h = 1e-6
        fd = (spec.value(x + h) - spec.value(x - h)) / (2 * h)
        assert spec.derivative(x) == pytest.approx(fd, rel=1e-4, abs=1e-4)
        fa = (spec.antiderivative(x + h) - spec.antiderivative(x - h)) / (2 * h)
        assert fa == pytest.approx(spec.value(x), rel=1e-5, abs=1e-6)


def test_branches_reproduce_values():
    grid = np.linspace(-3, 3, 3001)
    for fam in DriftFamily:
        spec = DriftSpec(fam, 0.7, 0.4)
        out = np.full(grid.size, np.nan)
        for b in spec.branches():
            sel = b.contains(grid)
            out[sel] = b.c * np.abs(grid[sel]) ** b.q
        ok = np.isfinite(out)
        assert ok.mean() > 0.99
        assert np.allclose(out[ok], spec.value(grid[ok]), rtol=1e-12, atol=1e-14)


# -- scaling exponents ----------------------------------------------------------

@pytest.mark.parametrize("kappa,p,alpha,beta,r", [(1.0, 4.0, 1.0, 0.0, 0.5),
                                                  (0.5, 2.0, 0.8, 0.2, 0.6)])
def test_scaling_examples(kappa, p, alpha, beta, r):
    ex = scaling_exponents(kappa, p)
    assert (ex.alpha, ex.beta, ex.speed_r) == pytest.approx((alpha, beta, r), abs=1e-15)


def test_regime_boundary_rejected():
    with pytest.raises(InvalidRegimeError):
        scaling_exponents(1.0, 2.0)
    with pytest.raises(InvalidRegimeError):
        ModelParams(0.5, 0.9)


@given(st.floats(0.01, 1.0), st.floats(0.0, 20.0))
def test_scaling_identities(kappa, extra):
    p = 2 * kappa + extra + 1e-6
    ex = scaling_exponents(kappa, p)
    assert ex.alpha / p - ex.beta / 2 == pytest.approx(ex.speed_r / 2, abs=1e-12)
    assert (ex.alpha / p - ex.beta) / kappa == pytest.approx(ex.alpha / p, abs=1e-12)
    assert ex.speed_r < 1


# -- simulation -----------------------------------------------------------------

def test_ode_linear_decay():
    dt = 1e-3
    x = euler_maruyama(DriftSpec.exact(1.0), 0.0, 1.0, 1000, dt)
    assert x[-1] == pytest.approx(math.exp(-1), abs=2 * dt)
    # Euler error is O(dt): halving dt halves it
    x2 = euler_maruyama(DriftSpec.exact(1.0), 0.0, 1.0, 2000, dt / 2)
    assert abs(x2[-1] - math.exp(-1)) / abs(x[-1] - math.exp(-1)) == pytest.approx(0.5, abs=0.01)


def test_ode_square_root_hits_zero_at_two():
    dt = 1e-4
    x = euler_maruyama(DriftSpec.exact(0.5), 0.0, 1.0, 25000, dt)
    t = np.arange(x.size) * dt
    exact = np.where(t < 2, (1 - t / 2) ** 2, 0.0)
    assert np.max(np.abs(x - exact)) < 0.02
    first = t[np.argmax(x <= 0)]
    assert first == pytest.approx(2.0, abs=0.01)
    # afterwards the scheme chatters at the dt**2 scale around 0
    assert np.max(np.abs(x[t > first])) <= dt ** 2


def test_seed_determinism_and_ensemble_identity():
    P = ModelParams(0.7, 3.0, 1.3)
    spec = DriftSpec.exact(0.7)
    a = simulate_path(P, spec, 0.2, 3.0, 0.01, seed=9, replica=4)
    b = simulate_path(P, spec, 0.2, 3.0, 0.01, seed=9, replica=4)
    assert np.array_equal(a.values, b.values)
    ens = simulate_ensemble(P, spec, 0.2, 3.0, 0.01, seed=9, replicas=6)
    assert np.array_equal(ens[:, 4], a.values)
    c = simulate_path(P, spec, 0.2, 3.0, 0.01, seed=10, replica=4)
    assert not np.array_equal(a.values, c.values)


def test_times_increasing():
    pth = simulate_path(ModelParams(1.0, 4.0), DriftSpec.exact(1.0), 0.0, 2.0, 0.05)
    assert np.all(np.diff(pth.times) > 0) and len(pth.times) == len(pth.values)


def test_common_noise_pathwise_dominance():
    # u_eps >= D on x >= 0, so with shared increments the u_eps path stays above
    P = ModelParams(0.5, 2.0)
    dt = 1e-3
    for rep in range(5):
        x = simulate_path(P, DriftSpec.exact(0.5), 0.8, 3.0, dt, seed=3, replica=rep).values
        u = simulate_path(P, DriftSpec(DriftFamily.MOLLIFIED, 0.5, 0.2), 0.8, 3.0, dt,
                          seed=3, replica=rep).values
        hit = np.flatnonzero(x <= 0)
        stop = hit[0] if hit.size else x.size
        assert np.all(u[:stop] >= x[:stop] - math.sqrt(dt))


def test_scaled_noise_amplitude():
    P = ModelParams(1.0, 4.0, 2.0)
    assert scaled_noise_amplitude(P, 1e6) == pytest.approx(2.0 * 10 ** -1.5, rel=1e-12)


def test_scaled_zero_noise_matches_rescaled_ode():
    # with sigma -> 0 the rescaled process is the same ODE; kappa = 1 has alpha = 1, beta = 0
    spec = DriftSpec.exact(1.0)
    x = euler_maruyama(spec, 0.0, 2.0, 500, 0.002)
    y = euler_maruyama(spec, 0.0, 1.0, 500, 0.002)
    assert np.allclose(x / 2.0, y, rtol=1e-14)


def test_simulate_scaled_uses_reduced_amplitude():
    P = ModelParams(1.0, 4.0)
    spec = DriftSpec.exact(1.0)
    a = simulate_scaled(P, 1e4, spec, 0.0, 1.0, 0.01, seed=2)
    b = simulate_path(P, spec, 0.0, 1.0, 0.01, seed=2)
    assert a.noise_amp == pytest.approx(0.1)
    assert np.allclose(a.values, 0.1 * b.values, atol=1e-12)


@pytest.mark.parametrize("vals,p,stop,expected", [
    (2.0, 3.0, 1.5, 12.0),
    (0.0, 2.0, None, 0.0),
])
def test_area_constant(vals, p, stop, expected):
    pth = SamplePath.from_function(lambda t: vals, 2.0, 0.01)
    assert area_functional(pth, p, stop) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_area_ramp_exact_trapezoid():
    pth = SamplePath(np.linspace(0, 1, 11), np.linspace(0, 1, 11), 0.1)
    assert area_functional(pth, 1.0) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(0.01, 1.99))
def test_area_monotone_in_stop(stop):
    pth = SamplePath.from_function(lambda t: np.sin(3 * t), 2.0, 0.01)
    a = area_functional(pth, 2.0, stop)
    assert 0 <= a <= area_functional(pth, 2.0)


def test_path_csv_roundtrip(tmp_path):
    pth = simulate_path(ModelParams(1.0, 4.0), DriftSpec.exact(1.0), 0.0, 1.0, 0.01, seed=4)
    f = tmp_path / "p.csv"
    write_path_csv(pth, f)
    assert f.read_text().splitlines()[0] == "time,value"
    back = read_path_csv(f)
    assert np.array_equal(back.values, pth.values)


@pytest.mark.slow
def test_long_run_second_moment():
    # time average of X^2 against the stationary variance 1/2; batch means for the error
    P = ModelParams(1.0, 4.0)
    pth = simulate_path(P, DriftSpec.exact(1.0), 0.0, 1e4, 1e-3, seed=21)
    x2 = pth.values[1:] ** 2
    batches = x2.reshape(100, -1).mean(axis=1)
    se = batches.std(ddof=1) / 10
    assert abs(batches.mean() - 0.5) <= 3 * se
