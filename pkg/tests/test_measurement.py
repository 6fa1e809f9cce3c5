import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mepqlab.errors import ValidationError
from mepqlab.hilbert import random_ket, symmetrizer
from mepqlab.measurement import (BCLSpec, TriggerModel, apparatus_isometry, block_trace,
                                 build_unitary, conditional_states, expansion_coefficients,
                                 premeasure, max_cross_trace, commuting_deviations, random_bcl_spec,
                                 random_coefficients, random_trigger_model, repeatability_check,
                                 state_transformer, symmetrize_slots, trigger_observable,
                                 trigger_states, w_operator)

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


# ---------------------------------------------------------------- coupling

@given(seeds, st.integers(2, 5))
def test_unitary_maps_domain_to_image(seed, ds):
    rng = np.random.default_rng(seed)
    spec = random_bcl_spec(rng, ds, int(rng.integers(1, ds + 1)))
    u = build_unitary(spec, rng=rng).matrix
    np.testing.assert_allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-12)
    for k, (v, t) in enumerate(zip(spec.eigvecs, spec.targets)):
        for j in range(v.shape[1]):
            img = u @ np.kron(v[:, j], spec.ready)
            np.testing.assert_allclose(img, np.kron(t[:, j], spec.pointers[:, k]), atol=1e-12)


@given(seeds, st.integers(2, 5))
def test_probability_reproducibility(seed, ds):
    rng = np.random.default_rng(seed)
    spec = random_bcl_spec(rng, ds, int(rng.integers(1, ds + 1)))
    res = premeasure(spec, random_ket(ds, rng))
    assert res.reproducibility_error < 1e-12
    # pointer probabilities read from the reduced apparatus state
    app = res.apparatus_state.matrix
    direct = np.real([np.vdot(spec.pointers[:, k], app @ spec.pointers[:, k])
                      for k in range(spec.n_outcomes)])
    np.testing.assert_allclose(direct, res.p, atol=1e-12)


@given(seeds)
def test_outcome_statistics_independent_of_completion(seed):
    rng = np.random.default_rng(seed)
    spec = random_bcl_spec(rng, 4, 2, apparatus_dim=4)
    phi = random_ket(4, rng)
    base = premeasure(spec, phi)
    for _ in range(3):
        other = premeasure(spec, phi, build_unitary(spec, rng=rng))
        np.testing.assert_allclose(other.phi_end, base.phi_end, atol=1e-12)
        np.testing.assert_allclose(other.p, base.p, atol=1e-12)


def test_pure_end_state_is_not_objectified(rng):
    spec = random_bcl_spec(rng, 3, 3)
    res = premeasure(spec, np.ones(3) / np.sqrt(3))
    assert abs(res.composite_purity - 1) < 1e-12
    assert not res.objectified
    res1 = premeasure(spec, spec.eigvecs[0][:, 0])
    assert res1.objectified
    np.testing.assert_allclose(res1.p, [1, 0, 0], atol=1e-12)


def test_defect_vanishes_for_orthogonal_conditional_states(rng):
    spec = random_bcl_spec(rng, 3, 3, von_neumann=True)
    res = premeasure(spec, random_ket(3, rng))
    assert res.defect < 1e-12
    app = res.apparatus_state.matrix
    p = spec.pointers
    off = abs(np.vdot(p[:, 0], app @ p[:, 1]))
    assert off < 1e-12


def test_conditional_states_match_premeasurement(rng):
    spec = random_bcl_spec(rng, 4, 2)
    phi = random_ket(4, rng)
    p, states = conditional_states(expansion_coefficients(spec, phi), spec.targets)
    res = premeasure(spec, phi)
    np.testing.assert_allclose(p, res.p, atol=1e-12)
    for a, b in zip(states, res.phi1):
        assert abs(abs(np.vdot(a, b)) - 1) < 1e-12


def test_spec_validation(rng):
    spec = random_bcl_spec(rng, 3, 2)
    with pytest.raises(ValidationError):
        BCLSpec(spec.eigenvalues, spec.eigvecs, spec.targets, spec.pointers[:, 0], spec.pointers)
    with pytest.raises(ValidationError):
        BCLSpec((1.0, 1.0), spec.eigvecs, spec.targets, spec.ready, spec.pointers)
    with pytest.raises(ValidationError):
        premeasure(spec, np.ones(3))
    with pytest.raises(ValidationError):
        random_bcl_spec(rng, 2, 3)


def test_spec_json_roundtrip(rng):
    spec = random_bcl_spec(rng, 4, 3)
    back = BCLSpec.from_json(spec.to_json())
    for a, b in zip(back.eigvecs, spec.eigvecs):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.pointers, spec.pointers)
    with pytest.raises(ValidationError):
        BCLSpec.from_json('{"groups": 3}')


# ------------------------------------------------------------ repeatability

def test_von_neumann_coupling_is_repeatable(rng):
    spec = random_bcl_spec(rng, 4, 3, von_neumann=True)
    tr = state_transformer(spec)
    res = repeatability_check(tr, rng)
    assert res.repeatable and res.max_violation < 1e-12
    assert res.sequential_error < 1e-12
    assert tr.completeness_error() < 1e-12


def test_generic_coupling_is_not_repeatable(rng):
    spec = random_bcl_spec(rng, 4, 2)
    tr = state_transformer(spec)
    res = repeatability_check(tr, rng)
    assert not res.repeatable and res.max_violation > 0.1
    assert tr.completeness_error() < 1e-12


def test_transformer_unknown_outcome(rng):
    tr = state_transformer(random_bcl_spec(rng, 2, 2))
    with pytest.raises(ValidationError):
        tr.apply([7.0], np.eye(2) / 2)


# ------------------------------------------------------------ symmetrizing

@pytest.mark.parametrize("n,d", [(2, 2), (2, 3), (3, 2)])
@pytest.mark.parametrize("eps", [1, -1])
def test_slot_symmetrizer_matches_projector(n, d, eps, rng):
    kind = "symmetric" if eps > 0 else "antisymmetric"
    p = symmetrizer(n, d, kind).matrix
    v = rng.standard_normal(d ** n) + 0j
    np.testing.assert_allclose(symmetrize_slots(v, n, d, range(n), eps), p @ v, atol=1e-14)


def test_partial_slot_symmetrization_commutes_with_disjoint_slots(rng):
    d, n = 2, 4
    m = rng.standard_normal(d ** n) + 0j
    a = symmetrize_slots(symmetrize_slots(m, n, d, [0, 1], -1), n, d, [2, 3], -1)
    b = symmetrize_slots(symmetrize_slots(m, n, d, [2, 3], -1), n, d, [0, 1], -1)
    np.testing.assert_allclose(a, b, atol=1e-14)


# ----------------------------------------------------------- trigger model

def _model(seed, eps, d=5, n=2, count=1):
    rng = np.random.default_rng(seed)
    model = random_trigger_model(rng, d, n, eps, count=count)
    return model, random_coefficients(model, rng)


@settings(max_examples=30)
@given(seeds, st.sampled_from([1, -1]), st.integers(2, 3))
def test_cross_terms_are_traceless(seed, eps, n):
    model, coeffs = _model(seed, eps, d=2 * n, n=n)
    assert max_cross_trace(model, coeffs) < 1e-12


def test_diagonal_terms_carry_weight():
    model, coeffs = _model(4, -1)
    _, phi1 = conditional_states(coeffs, model.targets)
    assert abs(np.trace(w_operator(model, phi1, 0, 0))) > 0.1


@pytest.mark.parametrize("eps", [1, -1])
def test_trigger_state_traces(eps):
    model, coeffs = _model(9, eps)
    st_ = trigger_states(model, coeffs)
    assert abs(st_.trace("diagonal") - 1) < 1e-12
    assert abs(st_.trace("coherent") - 1) < 1e-12
    np.testing.assert_allclose(np.diag(st_.apparatus_marginal("diagonal"))[1:], st_.p, atol=1e-12)
    comps = st_.gemenge()
    assert abs(sum(w for w, _, _ in comps) - 1) < 1e-12
    for _, _, blk in comps:
        assert abs(np.trace(blk) - 1) < 1e-12


def test_diagonal_and_coherent_constructions_differ_off_diagonal():
    model, coeffs = _model(2, 1)
    st_ = trigger_states(model, coeffs)
    m2, m3 = st_.apparatus_marginal("coherent"), st_.apparatus_marginal("diagonal")
    np.testing.assert_allclose(m2, m3, atol=1e-12)  # cross traces vanish
    d2, d3 = st_.dense("coherent"), st_.dense("diagonal")
    assert np.max(np.abs(d2 - d3)) > 1e-3


@pytest.mark.parametrize("eps", [1, -1])
def test_commuting_observables_do_not_see_coherences(eps):
    model, coeffs = _model(13, eps)
    assert np.max(commuting_deviations(model, coeffs, trials=40, seed=1)) < 1e-10
    control = commuting_deviations(model, coeffs, trials=40, seed=1, commuting=False)
    assert np.mean(control > 1e-3) >= 0.9


def test_compressed_trace_matches_dense_trace():
    model, coeffs = _model(21, -1, d=4)
    st_ = trigger_states(model, coeffs)
    basis = st_.support_basis()
    r, n = basis.shape[1], model.n_detectors
    rng = np.random.default_rng(0)
    h = rng.standard_normal((n * r, n * r)) + 1j * rng.standard_normal((n * r, n * r))
    h = h + h.conj().T
    blocks = {(l, k): h.reshape(n, r, n, r)[l, :, k, :] for k in range(n) for l in range(n)}
    # lift B to the full particle x apparatus space, apparatus index last
    D = st_.particle_dim
    full = np.zeros((D, n + 1, D, n + 1), dtype=complex)
    for (l, k), blk in blocks.items():
        full[:, l + 1, :, k + 1] = basis @ blk @ basis.conj().T
    full = full.reshape(D * (n + 1), D * (n + 1))
    for kind in ("coherent", "diagonal"):
        dense = np.trace(full @ st_.dense(kind))
        comp = block_trace(blocks, st_.compressed_blocks(kind, basis), n)
        assert abs(dense - comp) < 1e-10


def test_pauli_blocked_configuration_rejected():
    e0 = np.array([[1.0], [0.0]], dtype=complex)
    pol = np.diag([1.0, 0.0]).astype(complex)
    model = TriggerModel(2, ((0, 1),), -1, (pol,), (1,), (e0,), (1.0,))
    with pytest.raises(ValidationError):
        trigger_states(model, [np.array([1.0])])


def test_trigger_model_validation():
    e0 = np.array([[1.0], [0.0], [0.0], [0.0]], dtype=complex)
    one = np.ones((1, 1), dtype=complex)
    with pytest.raises(ValidationError):
        TriggerModel(4, ((0, 1), (1, 2)), 1, (one, one), (0, 0), (e0, e0), (1.0, 2.0))
    with pytest.raises(ValidationError):
        TriggerModel(4, ((0, 1),), 1, (one,), (0,), (e0,), (0.0,))
    with pytest.raises(ValidationError):
        TriggerModel(4, ((0, 1),), 1, (one,), (0,), (e0,), (1.0,), np.array([1.0, 0.0]))
    with pytest.raises(ValidationError):
        random_trigger_model(np.random.default_rng(0), 4, 1, 1, count=2)


def test_trigger_observable_spectrum():
    model, _ = _model(5, 1, d=6, n=3)
    v = apparatus_isometry(model)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
    a = trigger_observable(model)
    for k, o in enumerate(model.outcomes):
        np.testing.assert_allclose(a @ v[:, k + 1], o * v[:, k + 1], atol=1e-12)
    np.testing.assert_allclose(a @ v[:, 0], 0, atol=1e-12)
