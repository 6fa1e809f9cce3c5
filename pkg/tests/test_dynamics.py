import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from mepqlab.dynamics import (PolynomialPotential, QuadraticPotential, closed_form_trajectory,
                              evolution_coeffs, fock_quantum_oracle, mc_classical_oracle,
                              worker_count)
from mepqlab.errors import NumericalError, ValidationError
from mepqlab.mepacket import MEPacketParams

SQRT5 = 2.23606797749978969641

potentials = st.builds(
    QuadraticPotential,
    V0=st.floats(-2, 2), V1=st.floats(-2, 2),
    V2=st.one_of(st.just(0.0), st.floats(-2, -0.1), st.floats(0.1, 3)),
    mu=st.floats(0.3, 3),
)


def _numeric_flow(pot, q0, p0, t):
    def rhs(_, y):
        return [y[1] / pot.mu, -(pot.V1 + pot.V2 * y[0])]

    sol = solve_ivp(rhs, (0, t[-1]), [q0, p0], t_eval=t, rtol=1e-12, atol=1e-12, method="DOP853")
    return sol.y


@given(potentials)
def test_flow_coefficients_match_numeric_integration(pot):
    t = np.linspace(0, 2.0, 9)
    c = evolution_coeffs(pot, t)
    q0, p0 = 0.3, -0.7
    y = _numeric_flow(pot, q0, p0, t)
    scale = max(1.0, float(np.max(np.abs(y))))
    np.testing.assert_allclose(c.f0 + c.f1 * q0 + c.f2 * p0, y[0], atol=1e-8 * scale)
    np.testing.assert_allclose(c.g0 + c.g1 * q0 + c.g2 * p0, y[1], atol=1e-8 * scale)


@given(potentials)
def test_flow_is_area_preserving(pot):
    c = evolution_coeffs(pot, np.linspace(0, 3, 7))
    np.testing.assert_allclose(c.determinant(), 1.0, rtol=1e-10)


def test_free_spreading_at_two():
    p = MEPacketParams(0.0, 0.0, 1.0, 1.0)
    tr = closed_form_trajectory(p, QuadraticPotential(), [0.0, 2.0])
    assert abs(tr.dQ[1] - SQRT5) < 1e-12
    assert tr.dP[1] == 1.0


def test_harmonic_period_returns_moments():
    p = MEPacketParams(1.0, 0.5, 0.7, 1.3)
    tr = closed_form_trajectory(p, QuadraticPotential(V2=1.0), [0.0, 2 * math.pi])
    np.testing.assert_allclose(tr.as_array()[1], [1.0, 0.5, 0.7, 1.3], atol=1e-14)


def test_closed_form_requires_sorted_times():
    p = MEPacketParams(0, 0, 1, 1)
    with pytest.raises(ValidationError):
        closed_form_trajectory(p, QuadraticPotential(), [1.0, 0.0])


def test_trajectory_csv_columns():
    p = MEPacketParams(0, 0, 1, 1)
    text = closed_form_trajectory(p, QuadraticPotential(), [0.0, 1.0]).to_csv()
    assert text.splitlines()[0] == "t,Q,P,dQ,dP"
    assert len(text.splitlines()) == 3


# ---------------------------------------------------------- Monte Carlo

def test_mc_within_three_standard_errors():
    p = MEPacketParams(1.0, 0.5, 1.0, 1.0)
    pot = QuadraticPotential(V2=1.0)
    t = np.linspace(0, 4 * math.pi, 9)
    mc = mc_classical_oracle(p, pot, t, 50_000, seed=7)
    cf = closed_form_trajectory(p, pot, t)
    z = np.abs(mc.as_array() - cf.as_array()) / np.stack(mc.se, axis=1)
    assert np.max(z) < 4.5  # 36 correlated comparisons


def test_mc_exact_and_integrated_agree_per_sample():
    p = MEPacketParams(0.2, -0.1, 0.8, 1.1)
    pot = QuadraticPotential(V1=0.3, V2=2.0, mu=1.5)
    t = np.linspace(0, 3, 5)
    a = mc_classical_oracle(p, pot, t, 2000, seed=3, method="exact")
    b = mc_classical_oracle(p, pot, t, 2000, seed=3, method="integrate")
    np.testing.assert_allclose(a.as_array(), b.as_array(), atol=1e-8)


def test_mc_polynomial_matches_force_callback():
    p = MEPacketParams(0.0, 0.0, 0.5, 0.5)
    poly = PolynomialPotential((0.0, 0.0, 0.5, 0.0, 0.1))
    t = np.linspace(0, 2, 3)
    a = mc_classical_oracle(p, poly, t, 1000, seed=11)
    b = mc_classical_oracle(p, lambda q: -(q + 0.4 * q ** 3), t, 1000, seed=11, mu=1.0)
    np.testing.assert_allclose(a.as_array(), b.as_array(), atol=1e-8)


def test_mc_independent_of_worker_count(monkeypatch):
    p = MEPacketParams(1.0, 0.5, 1.0, 1.0)
    pot = QuadraticPotential(V2=1.0)
    t = np.linspace(0, 1, 4)
    monkeypatch.setenv("MEPQLAB_THREADS", "1")
    a = mc_classical_oracle(p, pot, t, 5000, seed=5)
    monkeypatch.setenv("MEPQLAB_THREADS", "4")
    b = mc_classical_oracle(p, pot, t, 5000, seed=5)
    np.testing.assert_array_equal(a.as_array(), b.as_array())


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MEPQLAB_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("MEPQLAB_THREADS", "x")
    with pytest.raises(ValidationError):
        worker_count()


def test_mc_input_validation():
    p = MEPacketParams(0, 0, 1, 1)
    with pytest.raises(ValidationError):
        mc_classical_oracle(p, QuadraticPotential(), [0, 1], 10, seed=1)
    with pytest.raises(ValidationError):
        mc_classical_oracle(p, lambda q: -q, [0, 1], 1000, seed=1)
    with pytest.raises(ValidationError):
        mc_classical_oracle(p, PolynomialPotential((0, 0, 1)), [0, 1], 1000, seed=1, method="exact")


# ----------------------------------------------------------- Fock oracle

@pytest.mark.parametrize("pot", [QuadraticPotential(V2=1.0), QuadraticPotential(V1=0.4, V2=2.5, mu=0.8)])
def test_fock_oracle_matches_closed_form(pot):
    p = MEPacketParams(1.0, 0.5, 1.0, 1.0)
    t = np.linspace(0, 2 * math.pi, 13)
    fo = fock_quantum_oracle(p, pot, t)
    cf = closed_form_trajectory(p, pot, t)
    assert np.max(np.abs(fo.as_array() - cf.as_array())) < 1e-6


def test_fock_oracle_short_free_run():
    p = MEPacketParams(0.0, 0.3, 1.0, 1.0)
    t = np.linspace(0, 1.0, 5)
    fo = fock_quantum_oracle(p, QuadraticPotential(), t)
    cf = closed_form_trajectory(p, QuadraticPotential(), t)
    assert np.max(np.abs(fo.as_array() - cf.as_array())) < 1e-6


def test_fock_oracle_rejections():
    p = MEPacketParams(0, 0, 1, 1)
    with pytest.raises(ValidationError):
        fock_quantum_oracle(p, QuadraticPotential(V2=-1.0), [0, 1])
    with pytest.raises(ValidationError):
        fock_quantum_oracle(MEPacketParams(0, 0, 0.3, 0.3), QuadraticPotential(V2=1.0), [0, 1])
    with pytest.raises(NumericalError):
        fock_quantum_oracle(p, QuadraticPotential(), [0, 50.0], max_size=64)
