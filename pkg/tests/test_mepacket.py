import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad, quad
from scipy.linalg import expm

from mepqlab.errors import ValidationError
from mepqlab.grid import Grid1D
from mepqlab.hilbert import von_neumann_entropy
from mepqlab.mepacket import (MEPacketParams, classical_density, classical_entropy,
                              classical_limit_report, classical_multipliers, classical_partition,
                              fock_cutoff, k_matrix, ladder_matrices, limit_argument,
                              occupation_weights, partition_ratio, quantum_entropy,
                              quantum_multipliers, quantum_partition, quantum_state, thermal_ratio)

# reference values evaluated with mpmath at 30 digits
ERF_ONE_SIGMA = 0.682689492137085897
X_NU3 = 0.346573590279972655
DEV_NU3 = 0.0201394465967894817
X_NU100 = 0.0100003333533347620
DEV_NU100 = 1.666786120761406714e-5
Z_CL_QUAD = 1.37084818107770814692  # (l1, l2, l3, l4, v) = (0.3, -0.2, 0.7, 1.3, 2.5)

packets = st.builds(
    MEPacketParams,
    Q=st.floats(-3, 3), P=st.floats(-3, 3),
    dQ=st.floats(0.3, 3), dP=st.floats(0.3, 3),
)


def test_param_validation():
    with pytest.raises(ValidationError):
        MEPacketParams(0, 0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        MEPacketParams(0, 0, 1.0, 1.0, hbar=-1)
    p = MEPacketParams(0, 0, 1.0, 1.0, hbar=0.5)
    assert p.v == 2 * math.pi * 0.5
    assert p.nu == 4.0


def test_params_text_roundtrip():
    p = MEPacketParams(1.0, -0.5, 0.7, 1.3, hbar=0.8, v=3.0)
    assert MEPacketParams.from_text(p.to_text()) == p
    with pytest.raises(ValidationError):
        MEPacketParams.from_text("Q = 0\nP = 0\ndQ = 1\ndP = 1\nnu = 5\n")
    with pytest.raises(ValidationError):
        MEPacketParams.from_text("Q = 0\nP = 0\ndQ = 1\ndP = 1\nfoo = 1\n")
    with pytest.raises(ValidationError):
        MEPacketParams.from_text("Q = 0\nP = 0\ndQ = 1\n")


# ------------------------------------------------------------ classical

def test_classical_density_normalized_against_unit_cell():
    p = MEPacketParams(0.4, -0.3, 0.8, 1.2, v=2.5)
    rho = classical_density(p)
    total = dblquad(lambda y, x: rho.density(x, y) / p.v, -12, 12, -12, 12)[0]
    assert abs(total - 1) < 1e-8


def test_classical_one_sigma_mass():
    p = MEPacketParams(0.0, 0.0, 1.0, 1.0)
    rho = classical_density(p)
    inner = quad(lambda q: quad(lambda y: rho.density(q, y), -12, 12)[0] / p.v, -1, 1)[0]
    assert abs(inner - ERF_ONE_SIGMA) < 1e-9


def test_classical_entropy_by_quadrature():
    p = MEPacketParams(0.2, 0.1, 0.9, 1.7, v=1.3)
    rho = classical_density(p)

    def integrand(y, x):
        r = rho.density(x, y)
        return -r * math.log(r) / p.v

    s = dblquad(integrand, -14, 14, -16, 16)[0]
    assert abs(s - classical_entropy(p)) < 1e-7


def test_classical_partition_quadrature():
    val = classical_partition(0.3, -0.2, 0.7, 1.3, 2.5)
    assert abs(val - Z_CL_QUAD) < 1e-13


@given(packets)
def test_classical_multipliers_reproduce_density(p):
    l1, l2, l3, l4 = classical_multipliers(p)
    z = classical_partition(l1, l2, l3, l4, p.v)
    q, y = p.Q + 0.3, p.P - 0.2
    direct = math.exp(-l1 * q - l2 * y - l3 * q * q - l4 * y * y) / z
    assert abs(direct - classical_density(p).density(q, y)) < 1e-9 * max(1, direct)


def test_classical_sampler_moments(rng):
    p = MEPacketParams(1.0, -2.0, 0.5, 1.5)
    q, y = classical_density(p).sample(200_000, rng)
    assert abs(q.mean() - 1.0) < 5 * 0.5 / math.sqrt(2e5)
    assert abs(y.std() - 1.5) < 0.01


# -------------------------------------------------------------- quantum

def test_occupation_weights_nu3():
    w = occupation_weights(3.0, 4)
    np.testing.assert_allclose(w, [0.5, 0.25, 0.125, 0.0625], rtol=1e-15)
    assert thermal_ratio(3.0) == 0.5
    # sum -R_m ln R_m with R_m = 2^-(m+1) is ln 4 (sympy)
    assert abs(quantum_entropy(3.0) - 2 * math.log(2)) < 1e-15


def test_pure_packet_limit():
    assert thermal_ratio(1.0) == 0.0
    assert fock_cutoff(1.0) == 0
    assert quantum_entropy(1.0) == 0.0
    np.testing.assert_array_equal(occupation_weights(1.0, 3), [1, 0, 0])
    with pytest.raises(ValidationError):
        thermal_ratio(0.9)


@pytest.mark.parametrize("nu", [1.5, 3.0, 10.0])
def test_fock_cutoff_is_minimal(nu):
    m = fock_cutoff(nu, 1e-12)
    r = thermal_ratio(nu)
    assert r ** (m + 1) < 1e-12 <= r ** m


@given(st.floats(1.01, 50))
def test_entropy_closed_form_matches_series(nu):
    w = occupation_weights(nu, fock_cutoff(nu, 1e-16) + 1)
    w = w[w > 0]
    series = float(-np.sum(w * np.log(w)))
    assert abs(series - quantum_entropy(nu)) < 1e-9 * max(1, series)


@pytest.mark.parametrize("hbar", [1.0, 0.4])
def test_fock_state_moments(hbar):
    p = MEPacketParams(0.7, -0.4, 0.9, 1.4, hbar=hbar)
    qs = quantum_state(p)
    t = qs.state.matrix
    e = lambda m: float(np.real(np.trace(t @ m)))
    assert abs(e(qs.q) - p.Q) < 1e-12
    assert abs(e(qs.p) - p.P) < 1e-12
    assert abs(e(qs.q2) - p.Q ** 2 - p.dQ ** 2) < 1e-9
    assert abs(e(qs.p2) - p.P ** 2 - p.dP ** 2) < 1e-9
    assert abs(von_neumann_entropy(t) - quantum_entropy(p.nu)) < 1e-9


def test_ladder_squares_agree_with_products():
    p = MEPacketParams(0.3, 0.6, 1.1, 0.8)
    q, y, q2, y2 = ladder_matrices(p, 30)
    # products are exact away from the truncation edge
    np.testing.assert_allclose((q @ q)[:28, :28], q2[:28, :28], atol=1e-12)
    np.testing.assert_allclose((y @ y)[:28, :28], y2[:28, :28], atol=1e-12)
    comm = (q @ y - y @ q)[:28, :28]
    np.testing.assert_allclose(comm, 1j * p.hbar * np.eye(28), atol=1e-12)


def test_k_matrix_spectrum():
    # unit-frequency oscillator levels hbar (n + 1/2), away from the truncation edge
    p = MEPacketParams(0.4, -1.0, 1.0, 2.0, hbar=0.7)
    w = np.linalg.eigvalsh(k_matrix(p, 40))
    np.testing.assert_allclose(w[:20], 0.7 * (np.arange(20) + 0.5), atol=1e-10)


def test_grid_state_matches_fock_moments():
    p = MEPacketParams(1.0, 0.5, 1.0, 1.0)
    g = Grid1D.centered(256, 0.15)
    qs = quantum_state(p, "grid", grid=g)
    t = qs.state.matrix
    x = g.x
    assert abs(np.real(np.trace(t @ np.diag(x))) - 1.0) < 1e-10
    assert abs(np.real(np.trace(t @ np.diag(x * x))) - 2.0) < 1e-8
    assert abs(von_neumann_entropy(t) - quantum_entropy(p.nu)) < 1e-8


def test_quantum_state_rejects_bad_inputs():
    p = MEPacketParams(0, 0, 1, 1.5)
    with pytest.raises(ValidationError):
        quantum_state(p, cutoff=1)
    with pytest.raises(ValidationError):
        quantum_state(p, "grid")
    with pytest.raises(ValidationError):
        quantum_state(p, "wigner")
    with pytest.raises(ValidationError):
        quantum_state(MEPacketParams(0, 0, 0.5, 0.5))
    tiny = Grid1D.centered(16, 0.1)
    with pytest.raises(ValidationError):
        quantum_state(p, "grid", grid=tiny)


def test_quantum_partition_against_matrix_exponential():
    p = MEPacketParams(0.5, -0.3, 1.0, 1.2)
    l1, l2, l3, l4 = quantum_multipliers(p)
    q, y, q2, y2 = ladder_matrices(p, 120)
    gen = l1 * q + l2 * y + l3 * q2 + l4 * y2
    gen = 0.5 * (gen + gen.conj().T)
    w = np.linalg.eigvalsh(gen)
    direct = float(np.sum(np.exp(-w[:60])))
    z = quantum_partition(l1, l2, l3, l4, p.hbar)
    assert abs(direct - z) < 1e-9 * z
    rho = expm(-gen)[:60, :60] / z
    assert abs(np.real(np.trace(rho @ q[:60, :60])) - p.Q) < 1e-8


# ------------------------------------------------------- classical limit

def test_limit_table_nu3():
    (nu, x, ratio, dev), = classical_limit_report([3.0])
    assert abs(x - X_NU3) < 1e-15
    assert abs(dev - DEV_NU3) < 1e-15
    assert abs(ratio - 1 - DEV_NU3) < 1e-15


def test_limit_table_nu100():
    (nu, x, ratio, dev), = classical_limit_report([100.0])
    assert abs(x - X_NU100) < 1e-16
    assert abs(dev - DEV_NU100) < 1e-13 * DEV_NU100


@given(st.floats(1.001, 1e6))
def test_deviation_decreases_with_nu(nu):
    a = classical_limit_report([nu, 2 * nu])
    assert a[1][3] < a[0][3]
    assert abs(a[0][2] - partition_ratio(nu)) < 1e-12 * a[0][2]


def test_partition_ratio_is_quadrature_ratio():
    p = MEPacketParams(0.0, 0.0, 1.0, 1.5)
    l = quantum_multipliers(p)
    zc = classical_partition(*l, v=2 * math.pi * p.hbar)
    zq = quantum_partition(*l, hbar=p.hbar)
    assert abs(zc / zq - partition_ratio(p.nu)) < 1e-13
    assert abs(limit_argument(p.nu) - p.hbar * math.sqrt(l[2] * l[3])) < 1e-15


def test_limit_table_rejects_nu_one():
    with pytest.raises(ValidationError):
        limit_argument(1.0)
