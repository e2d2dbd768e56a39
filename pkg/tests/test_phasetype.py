import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from nudgek.errors import (
    DimensionMismatch,
    InvalidScv,
    InvalidShape,
    NonStochasticAlpha,
    NotSubGenerator,
    UnstableSystem,
)
from nudgek.phasetype import (
    SystemConfig,
    erlang,
    expo,
    h2_balanced,
    h2_shape,
    normalize_system,
    parse_k,
    ph_ccdf,
    ph_laplace,
    ph_make,
    ph_mix,
    ph_moment,
    ph_standard,
)


def test_ph_make_accepts_valid_inputs():
    e = ph_make([1.0], [[-1.0]])
    assert e.n == 1 and e.mean == pytest.approx(1.0)
    h = ph_make([0.5, 0.5], [[-1.0, 0.0], [0.0, -2.0]])
    assert h.mean == pytest.approx(0.75)
    np.testing.assert_allclose(h.exit_vector, [1.0, 2.0])


@pytest.mark.parametrize(
    "alpha, S, err",
    [
        ([1.0], [[0.0]], NotSubGenerator),
        ([0.5, 0.4], [[-1.0, 0.0], [0.0, -1.0]], NonStochasticAlpha),
        ([1.2, -0.2], [[-1.0, 0.0], [0.0, -1.0]], NonStochasticAlpha),
        ([1.0, 0.0], [[-1.0, -0.5], [0.0, -1.0]], NotSubGenerator),
        ([1.0, 0.0], [[-1.0, 2.0], [0.0, -1.0]], NotSubGenerator),
        ([1.0, 0.0], [[-1.0, 1.0], [1.0, -1.0]], NotSubGenerator),
        ([1.0], [[-1.0, 0.0], [0.0, -1.0]], DimensionMismatch),
    ],
)
def test_ph_make_rejects(alpha, S, err):
    with pytest.raises(err):
        ph_make(alpha, S)


def test_phase_type_is_immutable():
    e = expo()
    with pytest.raises(ValueError):
        e.alpha[0] = 0.5


def test_expo_rate_is_inverse_mean():
    e = expo(2.0 / 3.0)
    np.testing.assert_allclose(e.alpha, [1.0])
    np.testing.assert_allclose(e.S, [[-1.5]])


def test_erlang_structure():
    e = erlang(4, 2.0)
    assert np.allclose(np.diag(e.S), -2.0)
    assert np.allclose(np.diag(e.S, 1), 2.0)
    assert e.mean == pytest.approx(2.0)
    assert e.scv == pytest.approx(0.25)


def test_h2_balanced_moments():
    h = h2_balanced(1.0, 5.0)
    assert h.alpha[0] == pytest.approx((1 + math.sqrt(4 / 6)) / 2, abs=1e-12)
    assert h.alpha[0] == pytest.approx(0.9082, abs=1e-4)
    assert ph_moment(h, 1) == pytest.approx(1.0, abs=1e-12)
    assert ph_moment(h, 2) / ph_moment(h, 1) ** 2 - 1 == pytest.approx(5.0, abs=1e-10)
    rates = -np.diag(h.S)
    assert h.alpha[0] / rates[0] == pytest.approx(h.alpha[1] / rates[1], rel=1e-12)


def test_h2_shape_reproduces_quoted_values():
    h = h2_shape(1.2 * 100 / 106, 2.0, 0.9)
    means = 1.0 / -np.diag(h.S)
    assert means[0] == pytest.approx(1.034, rel=5e-3)
    assert means[1] == pytest.approx(7.674, rel=5e-3)
    quoted = np.array([0.985, 0.015])
    assert np.linalg.norm(h.alpha - quoted) / np.linalg.norm(quoted) < 5e-3
    np.testing.assert_allclose(h.alpha, quoted, atol=5e-4)
    assert h.alpha[0] * means[0] / h.mean == pytest.approx(0.9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    mean=st.floats(0.05, 20.0),
    scv=st.floats(1.01, 30.0),
    f=st.floats(0.05, 0.95),
)
def test_hyperexponential_constructors_hit_mean_and_scv(mean, scv, f):
    for h in (h2_balanced(mean, scv), h2_shape(mean, scv, f)):
        assert ph_moment(h, 1) == pytest.approx(mean, rel=1e-12)
        m2 = ph_moment(h, 2)
        assert m2 / mean**2 - 1 == pytest.approx(scv, abs=1e-10 * max(1.0, scv))
        assert ph_laplace(h, 0.0) == 1.0


@pytest.mark.parametrize("scv", [1.0, 0.5])
def test_h2_rejects_low_scv(scv):
    with pytest.raises(InvalidScv):
        h2_balanced(1.0, scv)
    with pytest.raises(InvalidScv):
        h2_shape(1.0, scv, 0.5)


@pytest.mark.parametrize("f", [0.0, 1.0, -0.1])
def test_h2_shape_rejects_bad_f(f):
    with pytest.raises(InvalidShape):
        h2_shape(1.0, 2.0, f)


def test_ph_standard_dispatch():
    assert ph_standard("expo", mean=2.0).mean == pytest.approx(2.0)
    assert ph_standard("erlang", phases=3).n == 3
    with pytest.raises(ValueError):
        ph_standard("weibull")


def test_moments():
    assert ph_moment(expo(2.0), 1) == pytest.approx(2.0)
    assert ph_moment(expo(1.0), 2) == pytest.approx(2.0)
    assert ph_moment(erlang(5), 2) == pytest.approx(1.2)


def test_erlang_second_moment_by_series():
    # E[X^2] = sum_n (n-th term) of the gamma density integral, by quadrature
    e = erlang(5)
    dens = stats.gamma(a=5, scale=1 / 5).pdf
    m2, _ = integrate.quad(lambda x: x * x * dens(x), 0, np.inf)
    assert ph_moment(e, 2) == pytest.approx(m2, rel=1e-10)


def test_laplace():
    assert ph_laplace(expo(), 1.0) == pytest.approx(0.5)
    assert ph_laplace(expo(1 / 1.5), -0.25) == pytest.approx(1.2)
    assert ph_laplace(erlang(3), 0.0) == 1.0
    with pytest.raises(ArithmeticError):
        ph_laplace(expo(), -1.0)


def test_laplace_matches_moment_derivative():
    h = h2_shape(1.0, 3.0, 0.7)
    eps = 1e-5
    deriv = (ph_laplace(h, eps) - ph_laplace(h, -eps)) / (2 * eps)
    assert -deriv == pytest.approx(ph_moment(h, 1), rel=1e-7)


def test_ccdf_values():
    assert ph_ccdf(expo(), 1.0) == pytest.approx(math.exp(-1))
    assert ph_ccdf(erlang(2, 2.0), 2.0) == pytest.approx(3 * math.exp(-2), abs=1e-12)
    for ph in (expo(), erlang(4), h2_balanced(1, 3)):
        assert ph_ccdf(ph, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("ph", [expo(0.7), erlang(5, 2.0), h2_balanced(1.0, 5.0), h2_shape(1.5, 2.0, 0.9)])
def test_ccdf_monotone_and_bounded(ph):
    g = np.linspace(0, 30, 1000)
    v = ph_ccdf(ph, g)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v) <= 1e-15)


def test_ccdf_integrates_to_mean():
    ph = h2_shape(1.3, 2.5, 0.8)
    val, _ = integrate.quad(lambda t: ph_ccdf(ph, t), 0, np.inf, limit=200)
    assert val == pytest.approx(ph.mean, rel=1e-8)


def test_mixture():
    a, b = expo(2 / 3), expo(4 / 3)
    mix = ph_mix(0.5, a, b)
    assert mix.n == 2
    assert ph_moment(mix, 1) == pytest.approx(1.0)
    g = np.linspace(0, 10, 50)
    assert np.max(np.abs(ph_ccdf(mix, g) - 0.5 * ph_ccdf(a, g) - 0.5 * ph_ccdf(b, g))) < 1e-12
    assert np.allclose(ph_ccdf(ph_mix(0.5, expo(), expo()), g), np.exp(-g))
    assert np.allclose(ph_ccdf(ph_mix(1.0, erlang(3), expo()), g), ph_ccdf(erlang(3), g))


def test_normalize_system():
    cfg = normalize_system(0.5, 0.5, expo(), expo(), 2.0)
    assert cfg.mean1 == pytest.approx(2 / 3) and cfg.mean2 == pytest.approx(4 / 3)
    cfg = normalize_system(0.7, 0.7, expo(), h2_shape(1, 2, 0.9), 1.2)
    assert cfg.mean1 == pytest.approx(100 / 106)
    assert cfg.mix.scv > 1
    cfg = normalize_system(0.5, 0.3, erlang(2), erlang(2), 1.0)
    assert cfg.mean1 == pytest.approx(1.0) and cfg.mean2 == pytest.approx(1.0)
    # rescaling keeps the shape
    assert cfg.ph1.scv == pytest.approx(0.5)
    with pytest.raises(UnstableSystem):
        normalize_system(1.0, 0.5, expo(), expo(), 2.0)


def test_system_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(0.5, 0.5, expo(), expo(2.0))
    with pytest.raises(UnstableSystem):
        SystemConfig(1.2, 0.5, expo(), expo())
    with pytest.raises(ValueError):
        SystemConfig(0.5, 1.5, expo(), expo())


@pytest.mark.parametrize("raw, want", [(0, 0), (3, 3), ("inf", math.inf), (math.inf, math.inf), ("7", 7), (2.0, 2)])
def test_parse_k(raw, want):
    assert parse_k(raw) == want


@pytest.mark.parametrize("raw", [-1, 1.5, "x", None, -math.inf])
def test_parse_k_rejects(raw):
    with pytest.raises(ValueError):
        parse_k(raw)
