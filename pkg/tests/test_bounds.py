import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from schedlaw.bounds import (
    COSINE_COEFFICIENT,
    BoundCoefficients,
    bound_averaged,
    bound_last,
    bound_last_fast,
    bound_trace,
    closed_form_bound,
    closed_form_formula,
    cosine_integral_constant,
    cosine_integrand,
    effective_tau,
    last_iterate_features,
    log_tau_grid,
    numeric_optimal_peak_lr,
    optimal_peak_lr,
)
from schedlaw.errors import (
    DegenerateScheduleError,
    DomainError,
    NotDerivedError,
    NumericError,
    ValidationError,
)
from schedlaw.schedule import ScheduleKind, ScheduleSpec, eval_discrete

UNIT = BoundCoefficients(0.0, 1.0, 1.0)


def naive_last(L, D, G, eta, tau):
    """Plain-Python double sum, no prefix sums, no vectorization."""
    eta = [float(v) for v in eta[:tau]]
    S = sum(eta)
    out = L + D * D / (2 * S) + G * G / 2 * sum(e * e for e in eta) / S
    corr = 0.0
    for k in range(1, tau):
        inner = sum(eta[t - 1] for t in range(k + 1, tau + 1))
        num = sum(eta[t - 1] ** 2 for t in range(k, tau + 1))
        den = sum(eta[t - 1] for t in range(k, tau + 1))
        corr += eta[k - 1] / inner * num / den
    return out + G * G / 2 * corr


# -- averaged -----------------------------------------------------------------


def test_averaged_examples():
    assert bound_averaged(UNIT, [1.0], 1) == pytest.approx(1.0)
    assert bound_averaged(UNIT, np.full(100, 0.1), 100) == pytest.approx(0.1)
    lrs = eval_discrete(ScheduleSpec("cosine_decay", 0.3, 50))
    assert bound_averaged(BoundCoefficients(2.0, 3.0, 0.0), lrs, 37) == pytest.approx(2 + 9 / (2 * lrs[:37].sum()))


def test_averaged_degenerate_prefix():
    with pytest.raises(DegenerateScheduleError):
        bound_averaged(UNIT, [0.0, 1.0], 1)


# -- last iterate ------------------------------------------------------------


def test_last_single_step():
    assert bound_last(UNIT, [1.0], 1) == pytest.approx(1.0)
    assert bound_last_fast(UNIT, [1.0], 1) == pytest.approx(1.0)


def test_last_two_steps_against_hand_value():
    # 0.25 + 0.5 * (2/2) + 0.5 * (1/1)(2/2) = 1.25
    assert bound_last(UNIT, [1.0, 1.0], 2) == pytest.approx(1.25, rel=1e-15)
    assert bound_last_fast(UNIT, [1.0, 1.0], 2) == pytest.approx(1.25, rel=1e-12)


def test_constant_schedule_log_rate():
    T = 10_000
    eta = 1 / math.sqrt(T * math.log(T))
    v = bound_last(UNIT, np.full(T, eta), T)
    assert v == pytest.approx(math.sqrt(math.log(T) / T), rel=0.10)


def test_features_examples():
    assert last_iterate_features([1.0], 1) == pytest.approx((0.5, 0.5))
    assert last_iterate_features([1.0, 1.0], 2) == pytest.approx((0.25, 1.0))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=60),
    st.floats(-3, 3),
    st.floats(0, 3),
    st.floats(0, 3),
    st.data(),
)
def test_last_matches_naive_oracle(eta, L, D, G, data):
    tau = data.draw(st.integers(1, len(eta)))
    c = BoundCoefficients(L, D, G)
    expected = naive_last(L, D, G, eta, tau)
    assert bound_last(c, eta, tau) == pytest.approx(expected, rel=1e-10, abs=1e-12)
    assert bound_last_fast(c, eta, tau) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_fast_form_random_sequences(rng):
    for _ in range(20):
        eta = rng.uniform(1e-6, 1.0, size=50)
        c = BoundCoefficients(rng.normal(), rng.uniform(0, 3), rng.uniform(0, 3))
        assert bound_last_fast(c, eta, 50) == pytest.approx(bound_last(c, eta, 50), rel=1e-9)


def test_zero_final_step_uses_inert_tail():
    lrs = eval_discrete(ScheduleSpec("linear_decay", 1.0, 200))
    assert lrs[-1] == 0.0
    assert effective_tau(lrs, 200) == 199
    expected = naive_last(0, 1, 1, lrs, 199)
    assert bound_last(UNIT, lrs, 200) == pytest.approx(expected, rel=1e-12)
    assert bound_last_fast(UNIT, lrs, 200) == pytest.approx(expected, rel=1e-9)


def test_floored_mode_is_huge_but_finite():
    lrs = eval_discrete(ScheduleSpec("linear_decay", 1.0, 50))
    v = bound_last(UNIT, lrs, 50, inert_tail=False)
    assert math.isfinite(v) and v > 1e6
    # both forms divide by the same floored suffix sum; cancellation costs a few digits
    assert bound_last_fast(UNIT, lrs, 50, inert_tail=False) == pytest.approx(v, rel=1e-8)


def test_tau_validation():
    with pytest.raises(DomainError):
        bound_last(UNIT, [1.0, 1.0], 3)
    with pytest.raises(ValidationError):
        bound_last(UNIT, [1.0, 1.0], 1.5)
    with pytest.raises(DegenerateScheduleError):
        bound_last(UNIT, [0.0, 1.0], 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=40), st.floats(0, 2), st.floats(0, 2), st.floats(-1, 1))
def test_last_dominates_averaged_and_scales(eta, D, G, L):
    c = BoundCoefficients(L, D, G)
    T = len(eta)
    assert bound_last(c, eta, T) >= bound_averaged(c, eta, T) - 1e-12
    c2 = BoundCoefficients(L, 2 * D, 2 * G)
    assert bound_last(c2, eta, T) - L == pytest.approx(4 * (bound_last(c, eta, T) - L), rel=1e-12, abs=1e-12)


# -- trace --------------------------------------------------------------------


def test_trace_examples():
    tr = bound_trace(UNIT, [1.0], [1])
    assert tr.values.tolist() == [1.0]
    assert tr.to_csv() == "tau,bound\n1,1.0\n"
    lrs = np.full(1000, 1e-3)
    tr = bound_trace(UNIT, lrs, [500, 1000])
    assert tr.values[1] <= tr.values[0]


def test_trace_threads_are_order_independent():
    lrs = eval_discrete(ScheduleSpec("cosine_decay", 0.05, 3000))
    grid = log_tau_grid(3000, 80)
    a = bound_trace(UNIT, lrs, grid, workers=1).values
    b = bound_trace(UNIT, lrs, grid, workers=4).values
    assert np.array_equal(a, b)


def test_trace_attaches_tau():
    with pytest.raises(NumericError) as info:
        bound_trace(UNIT, [0.0, 0.0, 1.0], [1, 3])
    assert info.value.tau == 1


def test_trace_grid_validation():
    with pytest.raises(ValidationError):
        bound_trace(UNIT, [1.0, 1.0], [2, 1])
    with pytest.raises(DomainError):
        bound_trace(UNIT, [1.0, 1.0], [3])


def test_log_grid():
    g = log_tau_grid(100_000, 1000)
    assert g[0] == 1 and g[-1] == 100_000 and np.all(np.diff(g) > 0)
    assert len(g) <= 1000


def test_trace_budget():
    lrs = eval_discrete(ScheduleSpec("cosine_decay", 1 / math.sqrt(1e5), 100_000))
    t0 = time.perf_counter()
    bound_trace(UNIT, lrs, log_tau_grid(100_000), workers=1)
    assert time.perf_counter() - t0 < 10.0


def test_wsd_trace_drops_after_decay_onset():
    T = 10_000
    lrs = eval_discrete(ScheduleSpec("wsd", 1 / math.sqrt(T), T, c=0.8))
    tr = bound_trace(UNIT, lrs, [7000, 8000, 9000, 9999])
    assert tr.values[2] < tr.values[1] and tr.values[3] < tr.values[2]


# -- closed forms --------------------------------------------------------------


def test_closed_form_linear_exact():
    T = 10_000
    assert closed_form_bound("linear_decay", UNIT, 1 / math.sqrt(T), T) == pytest.approx(2 / math.sqrt(T), rel=1e-15)


def test_closed_form_wsd_small_c_limit():
    T, eta = 5000, 0.01
    lin = closed_form_bound("linear_decay", UNIT, eta, T)
    assert closed_form_bound("wsd", UNIT, eta, T, c=1e-9) == pytest.approx(lin, rel=1e-8)


def test_closed_form_formulas_and_cyclic():
    assert "1.061" in closed_form_formula("cosine_decay")
    assert COSINE_COEFFICIENT == 1.061
    with pytest.raises(NotDerivedError):
        closed_form_bound("cyclic", UNIT, 0.1, 100)
    with pytest.raises(ValidationError):
        closed_form_bound("wsd", UNIT, 0.1, 100)


def test_optimal_linear():
    eta, b = optimal_peak_lr("linear_decay", BoundCoefficients(0.3, 2.0, 4.0), 10_000)
    assert eta == pytest.approx(0.005)
    assert b == pytest.approx(0.3 + 0.16)


def test_optimal_constant_at_e_squared():
    T = math.e**2
    eta, b = optimal_peak_lr("constant", UNIT, T)
    assert eta == pytest.approx(1 / math.sqrt(2 * math.e**2))
    assert b == pytest.approx(math.sqrt(2) / math.e)


def test_cosine_over_linear_ratio():
    _, bc = optimal_peak_lr("cosine_decay", UNIT, 10_000)
    _, bl = optimal_peak_lr("linear_decay", UNIT, 10_000)
    assert bc / bl == pytest.approx(math.sqrt(1.061), rel=1e-12)


@pytest.mark.parametrize("kind", ["constant", "sqrt_inverse", "linear_decay", "cosine_decay", "wsd"])
def test_optimal_is_argmin_of_closed_form(kind):
    c = 0.8 if kind == "wsd" else None
    coeffs = BoundCoefficients(0.0, 1.3, 0.7)
    eta, b = optimal_peak_lr(kind, coeffs, 5000, c=c)
    for f in (0.9, 1.1):
        assert closed_form_bound(kind, coeffs, eta * f, 5000, c=c) > b
    assert closed_form_bound(kind, coeffs, eta, 5000, c=c) == pytest.approx(b, rel=1e-12)


def test_optimal_degenerate():
    with pytest.raises(DomainError):
        optimal_peak_lr("linear_decay", BoundCoefficients(0, 0.0, 1.0), 100)
    with pytest.raises(DomainError):
        optimal_peak_lr("cosine_decay", BoundCoefficients(0, 1.0, 0.0), 100)


def test_numeric_optimum_matches_closed_form_for_linear():
    T = 2000
    spec = ScheduleSpec("linear_decay", 1.0, T)
    eta, b = numeric_optimal_peak_lr(spec, UNIT)
    eta_cf, _ = optimal_peak_lr("linear_decay", UNIT, T)
    assert eta == pytest.approx(eta_cf, rel=0.05)


def test_numeric_optimum_ignores_L_star_shift():
    spec = ScheduleSpec("cyclic", 1.0, 1000, cycles=2)
    e0, b0 = numeric_optimal_peak_lr(spec, BoundCoefficients(0.0, 1.0, 1.0))
    e1, b1 = numeric_optimal_peak_lr(spec, BoundCoefficients(5.0, 1.0, 1.0))
    assert e1 == pytest.approx(e0, rel=1e-6)
    assert b1 - b0 == pytest.approx(5.0, rel=1e-9)


def test_cyclic_goes_through_numeric_path():
    eta, b = optimal_peak_lr("cyclic", UNIT, 1000, cycles=2)
    assert eta > 0 and b > 0


# -- cosine constant ----------------------------------------------------------


def test_cosine_integrand_at_zero():
    assert cosine_integrand(0.0) == pytest.approx(3.0, abs=1e-12)


def test_cosine_constant():
    v = cosine_integral_constant()
    assert v == pytest.approx(2.7443, abs=0.01)
    assert 3 / 8 + v / 4 == pytest.approx(1.061, abs=0.005)


def test_cosine_constant_against_high_precision_quad():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    pi = mpmath.pi

    def raw_u(u):
        # the integrand written in u = 1 - x with exact trig identities
        num = (1 - mpmath.cos(pi * u)) * (3 * u / 8 - mpmath.sin(pi * u) / (2 * pi) + mpmath.sin(2 * pi * u) / (16 * pi))
        den = (u / 2 - mpmath.sin(pi * u) / (2 * pi)) ** 2
        return num / den

    def raw(x):
        return raw_u(1 - mpmath.mpf(x))

    cut = mpmath.mpf("1e-8")
    ref = float(mpmath.quad(raw_u, [cut, 0.5, 1]) + 0.9 * pi**2 * cut)
    assert cosine_integral_constant() == pytest.approx(ref, abs=1e-5)
    for x in (0.1, 0.5, 0.9, 0.999, 0.99999):
        assert cosine_integrand(x) == pytest.approx(float(raw(x)), rel=1e-8)
    # independent check of the quadrature rule on the stable integrand
    assert cosine_integral_constant() == pytest.approx(integrate.quad(cosine_integrand, 0, 1, limit=200)[0], abs=1e-5)
