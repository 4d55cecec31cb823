import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deom import build_fock_operators
from deom.errors import AlignmentError, GridError, ShapeError
from deom.observables import (SpectrumTable, current_expectation, current_fluctuation_seed, default_omega_grid,
                              impurity_spectral_function, noise_correlations, noise_spectrum, operator_parity,
                              seed_correlation_rhs, spectrum_derivative, steady_current, total_noise)
from deom.solvers import propagate
from helpers import half_fourier, spinless_dot

LEADS = ((1.0, 10.0, 2.0, 0.6), (1.0, 10.0, 2.0, -0.6))


@pytest.fixture(scope="module")
def biased():
    return spinless_dot(0.2, LEADS, K=2, L=2)


def _table(values, w=None, kind="noise_S"):
    w = np.linspace(-1, 1, len(values)) if w is None else w
    return SpectrumTable(w, np.asarray(values), kind)


# ------------------------------------------------------------------ tables

@pytest.mark.parametrize("values", [np.array([0.1, 0.25, -3.5e-9]), np.array([1 + 2j, -0.5j, 3.0 + 0j])])
def test_table_csv_round_trip(values):
    t = SpectrumTable(np.array([-1.0, 0.0, 2.5]), values, "impurity_A", (0, 1), {"L": 3, "J": 8})
    text = t.to_csv()
    assert text.splitlines()[0] == "# kind=impurity_A, labels=0|1, params=L=3;J=8"
    back = SpectrumTable.from_csv(text)
    assert np.array_equal(back.omegas, t.omegas) and np.array_equal(back.values, t.values)
    assert back.is_complex == t.is_complex and back.kind == "impurity_A"
    assert back.params == {"L": "3", "J": "8"}


def test_table_file_handle_and_real_cast():
    t = _table(np.array([1.0 + 0j, 2.0 + 0j]))
    assert not t.is_complex
    buf = io.StringIO()
    assert t.to_csv(buf) is None
    assert buf.getvalue().splitlines()[1] == "omega,value"


@pytest.mark.parametrize("w,v,kind,err", [
    ([0.0, 1.0], [1.0, 2.0], "spectrum", ValueError),
    ([1.0, 0.0], [1.0, 2.0], "noise_S", GridError),
    ([0.0, 1.0], [1.0], "noise_S", ShapeError),
    ([0.0, 1.0], [1.0, np.nan], "noise_S", ValueError),
])
def test_table_validation(w, v, kind, err):
    with pytest.raises(err):
        SpectrumTable(np.array(w), np.array(v), kind)


def test_default_grid():
    w = default_omega_grid(6.0, 1.0, 100)
    assert w[0] == -12 and w[-1] == 12 and np.all(np.diff(w) > 0)
    assert np.all(np.isin(np.round(np.arange(-40, 41) / 20, 12), w))


# ------------------------------------------------------------- total noise

def test_total_noise_formula():
    w = np.linspace(-1, 1, 5)
    LL, RR = _table(np.full(5, 2.0), w), _table(np.full(5, 4.0), w)
    LR = _table(np.full(5, 1.0 + 7j), w)
    assert np.allclose(total_noise(LL, RR, LR).values, 0.25 * 2 + 0.25 * 4 - 0.5 * 1)
    assert np.allclose(total_noise(LL, RR, _table(np.zeros(5), w)).values, 1.5)
    assert np.allclose(total_noise(LL, LL, LL).values, 0.0)
    assert np.allclose(total_noise(LL, RR, LR, a=1.0, b=0.0).values, 2.0)


def test_total_noise_needs_shared_grid():
    a = _table(np.ones(5))
    with pytest.raises(AlignmentError):
        total_noise(a, a, _table(np.ones(5), np.linspace(-1, 2, 5)))
    with pytest.raises(AlignmentError):
        total_noise(a, _table(np.ones(4)), a)


# -------------------------------------------------------------- derivative

def test_derivative_constant_and_ramp():
    w = np.linspace(-3, 3, 61)
    assert not np.any(spectrum_derivative(_table(np.full(61, 2.5), w)).values)
    d = spectrum_derivative(_table(0.7 * w - 1.0, w))
    assert d.kind == "noise_dSdw" and np.max(np.abs(d.values - 0.7)) < 1e-12


def test_derivative_of_step_peaks_at_step():
    w = np.linspace(-2, 2, 41)
    d = spectrum_derivative(_table(np.where(w > 0.05, 1.0, 0.0), w)).values
    assert w[np.argmax(d)] in (0.0, 0.1)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-2, 2))
@settings(max_examples=20, deadline=None)
def test_derivative_exact_on_quadratics_in_interior(a, b, c):
    w = np.linspace(-1, 1, 21)
    d = spectrum_derivative(_table(a * w**2 + b * w + c, w)).values
    assert np.allclose(d[1:-1], 2 * a * w[1:-1] + b, atol=1e-9)


def test_derivative_grid_errors():
    with pytest.raises(GridError):
        spectrum_derivative(_table(np.ones(3), np.array([0.0, 0.1, 0.3])))
    with pytest.raises(GridError):
        spectrum_derivative(_table(np.ones(1), np.array([0.0])))


# ------------------------------------------------------------------ seeds

def test_operator_parity():
    ops = build_fock_operators(2)
    assert operator_parity(ops.a(0), ops) == 1
    assert operator_parity(ops.number(1), ops) == 0
    assert operator_parity(np.eye(4), ops) == 0
    with pytest.raises(ShapeError):
        operator_parity(np.eye(4) + ops.a(0), ops)


def test_identity_seed_is_state(biased):
    ops = biased.ops
    for side in ("left", "right"):
        s = seed_correlation_rhs(biased.state, np.eye(ops.dim), side, ops=ops)
        assert np.array_equal(s.blocks, biased.state.blocks)
    with pytest.raises(ValueError):
        seed_correlation_rhs(biased.state, ops.a(0))
    with pytest.raises(ValueError):
        seed_correlation_rhs(biased.state, ops.a(0), "middle", ops=ops)


def test_odd_left_seed_sign_and_even_seed_plain(biased):
    st_, ops = biased.state, biased.ops
    tiers = st_.layout.tier
    odd = seed_correlation_rhs(st_, ops.adag(0), ops=ops)
    plain = ops.adag(0)[None] @ st_.blocks
    assert np.array_equal(odd.blocks[tiers == 1], -plain[tiers == 1])
    assert np.array_equal(odd.blocks[tiers != 1], plain[tiers != 1])
    even = seed_correlation_rhs(st_, ops.number(0), ops=ops)
    assert np.array_equal(even.blocks, ops.number(0)[None] @ st_.blocks)


# -------------------------------------------------------- spectra & noise

def test_spectral_function_labels_and_positivity(biased):
    w = np.linspace(-3, 3, 13)
    A = impurity_spectral_function(biased, 0, omegas=w)
    assert A.kind == "impurity_A" and A.labels == (0, 0) and not A.is_complex
    assert np.all(A.values > 0)


def test_current_fluctuation_seed_is_traceless(biased):
    seed, I = current_fluctuation_seed(biased, "L")
    assert I == pytest.approx(steady_current(biased, "L"))
    # the reduced trace of I_L rho is <I_L>, so subtracting the mean leaves zero
    assert abs(np.trace(seed.root)) < 1e-10
    mean = current_expectation(biased.state, biased.modes, biased.ops, "L")
    assert abs(mean.imag) < 1e-12 and I > 0


def test_auto_noise_real_nonnegative_and_symmetric(biased):
    w = np.array([0.0, 0.4, 1.5, 4.0])
    S = noise_spectrum(biased, "L", omegas=w)
    assert not S.is_complex and np.all(S.values >= 0)
    Sm = noise_spectrum(biased, "L", omegas=-w[::-1])
    assert np.allclose(Sm.values[::-1], S.values, rtol=1e-8)


def test_cross_noise_hermitian(biased):
    w = np.array([0.3, 1.2])
    LR, RL = noise_spectrum(biased, "L", "R", w), noise_spectrum(biased, "R", "L", w)
    assert np.allclose(LR.values, np.conj(RL.values), atol=1e-12)


def test_noise_matches_time_domain(biased):
    """Frequency solve against RK4 propagation of the current-fluctuation seed."""
    omega, dt, every, T = 0.5, 0.01, 5, 20.0
    g = biased.generator.with_parity(0)
    ref = noise_correlations(biased, ["L", "R"], [omega])
    seed, _ = current_fluctuation_seed(biased, "R")
    means = {a: steady_current(biased, a) for a in ("L", "R")}
    X, ts, cs = seed, [0.0], []

    def sample(X):
        return [current_expectation(X, biased.modes, biased.ops, a) - means[a] * np.trace(X.root)
                for a in ("L", "R")]

    cs.append(sample(X))
    for i in range(int(round(T / (dt * every)))):
        X = propagate(X, g, dt, every)
        ts.append((i + 1) * dt * every)
        cs.append(sample(X))
    cs = np.array(cs)
    assert np.abs(cs[-1]).max() < 1e-6
    for i, a in enumerate(("L", "R")):
        assert abs(half_fourier(np.array(ts), cs[:, i], omega) - ref[(a, "R")][0]) < 1e-3
