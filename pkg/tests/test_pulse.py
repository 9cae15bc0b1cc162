import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustoc.errors import InvalidGridError, InvalidInputError, InvalidParameterError
from robustoc.pulse import (ControlPulse, FourierSum, ScoreWeights, SingleFrequency, TimeGrid, distortion,
                            fourier_distortion, implementability_score, single_frequency_distortion,
                            spectral_bandwidth, time_derivative)

finite = st.floats(-10, 10, allow_nan=False)


def ramp(T=1.0, N=11):
    g = TimeGrid(T, N)
    return ControlPulse(g, g.times.copy())


def test_grid_rejects_short_and_nonpositive():
    with pytest.raises(InvalidGridError):
        TimeGrid(1.0, 3)
    with pytest.raises(InvalidGridError):
        TimeGrid(0.0, 10)
    g = TimeGrid(2.0, 5)
    assert g.dt == 0.5
    assert g.n_interior == 3


def test_pulse_rejects_bad_values():
    g = TimeGrid(1.0, 5)
    with pytest.raises(InvalidInputError):
        ControlPulse(g, np.zeros(4))
    with pytest.raises(InvalidInputError):
        ControlPulse(g, [0, 1, np.nan, 0, 0])


def test_pulse_round_trips():
    g = TimeGrid(3.0, 9)
    p = ControlPulse(g, np.sin(g.times) * 1e-3 + np.pi)
    for q in (ControlPulse.from_json(p.to_json()), ControlPulse.from_csv(p.to_csv()),
              ControlPulse.from_dict(p.to_dict())):
        assert q.grid == g
        assert np.array_equal(q.values, p.values)


def test_from_csv_requires_header():
    with pytest.raises(InvalidInputError):
        ControlPulse.from_csv("0,1\n1,2\n")


# time_derivative

def test_derivative_of_constant_is_zero():
    g = TimeGrid(1.0, 11)
    assert np.all(time_derivative(ControlPulse(g, np.full(11, 5.0))) == 0)


def test_derivative_of_linear_is_one():
    np.testing.assert_allclose(time_derivative(ramp()), 1.0, atol=1e-13)


def test_derivative_exact_for_quadratic():
    g = TimeGrid(1.0, 101)
    d = time_derivative(ControlPulse(g, g.times ** 2))
    assert abs(d[50] - 1.0) < 1e-12
    np.testing.assert_allclose(d, 2 * g.times, atol=1e-11)


# distortions

def test_single_frequency_examples():
    base = ramp(1.0, 5)
    assert np.all(single_frequency_distortion(base, 0.0, 1) == 0)
    d = single_frequency_distortion(base, 0.1, 1)
    assert d[0] == 0 and d[-1] == 0
    assert abs(d[2]) < 1e-15  # sin(pi) at the midpoint
    assert d[1] == pytest.approx(0.1 * np.sin(np.pi / 2))
    with pytest.raises(InvalidParameterError):
        single_frequency_distortion(base, 0.1, 0)


def test_fourier_examples():
    g = TimeGrid(2.0, 33)
    assert np.all(fourier_distortion(g, FourierSum((0.0, 0.0, 0.0))) == 0)
    with pytest.raises(InvalidParameterError):
        fourier_distortion(g, FourierSum(()))
    a = fourier_distortion(g, FourierSum.random(5, 0.01, seed=3))
    b = fourier_distortion(g, FourierSum.random(5, 0.01, seed=3))
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(FourierSum.random(5, 0.01, seed=3).amplitudes)) <= 0.01


def test_distortion_dispatch():
    base = ramp(1.0, 17)
    assert np.array_equal(distortion(base, SingleFrequency(0.2, 2)), single_frequency_distortion(base, 0.2, 2))
    with pytest.raises(InvalidParameterError):
        distortion(base, "sine")


@given(st.lists(finite, min_size=1, max_size=8), st.integers(4, 200))
def test_fourier_endpoints_vanish(c, N):
    d = fourier_distortion(TimeGrid(1.0, N), FourierSum(tuple(c)))
    assert d[0] == 0.0 and d[-1] == 0.0


@given(st.lists(finite, min_size=3, max_size=3), st.lists(finite, min_size=3, max_size=3), finite)
def test_fourier_is_linear(c1, c2, s):
    g = TimeGrid(1.0, 40)
    lhs = fourier_distortion(g, FourierSum(tuple(x + s * y for x, y in zip(c1, c2))))
    rhs = fourier_distortion(g, FourierSum(tuple(c1))) + s * fourier_distortion(g, FourierSum(tuple(c2)))
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.max(np.abs(rhs))))


@settings(max_examples=50)
@given(finite, st.integers(1, 6))
def test_single_frequency_scales_with_amplitude(a, kappa):
    base = ControlPulse(TimeGrid(3.0, 50), np.linspace(0, 4, 50) ** 2)
    np.testing.assert_allclose(single_frequency_distortion(base, a, kappa),
                               a * single_frequency_distortion(base, 1.0, kappa), atol=1e-12)


# implementability

def test_linear_ramp_has_zero_bandwidth():
    assert spectral_bandwidth(ramp(2.0, 64)) == 0.0
    assert implementability_score(ramp(2.0, 64), ScoreWeights(1, 0, 0)) == 0.0


def test_high_harmonic_costs_more():
    g = TimeGrid(2.0, 256)
    base = np.linspace(0, 1, g.N)
    low = ControlPulse(g, base + np.sin(2 * np.pi * g.times / g.T))
    high = ControlPulse(g, base + np.sin(20 * np.pi * g.times / g.T))
    w = ScoreWeights(1, 0, 0)
    assert implementability_score(high, w) > implementability_score(low, w)


def test_amplitude_weight_reads_peak():
    g = TimeGrid(1.0, 21)
    p = ControlPulse(g, 3.0 * np.sin(np.pi * g.times))
    assert implementability_score(p, ScoreWeights(0, 0, 1)) == pytest.approx(3.0)


def test_negative_weights_rejected():
    with pytest.raises(InvalidParameterError):
        ScoreWeights(-1.0, 0, 0)
