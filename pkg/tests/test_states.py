import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from catauth.schmidt import make_schmidt, reference_states, pure_fidelity
from catauth.states import (
    BipartiteState, DensityOperator, StateError, apply_local_unitary, catalyst_challenge_state,
    embed_schmidt, fidelity_with, measure_projector, product_state, random_unitary,
    reduced_state, sample_projective_test, schmidt_of,
)

from conftest import weights


def test_embed_roundtrip():
    b, _ = reference_states()
    assert np.allclose(schmidt_of(embed_schmidt(b)).coefficients, b.coefficients, atol=1e-12)


@given(weights(max_dim=5), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_schmidt_invariant_under_local_unitaries(w, seed):
    rng = np.random.default_rng(seed)
    x = make_schmidt(w)
    s = embed_schmidt(x)
    s = apply_local_unitary(s, "A", random_unitary(x.dim, rng))
    s = apply_local_unitary(s, "B", random_unitary(x.dim, rng))
    np.testing.assert_allclose(schmidt_of(s).coefficients, x.coefficients, atol=1e-10)


def test_bob_marginal_ignores_alice_unitaries():
    _, c = reference_states()
    joint = catalyst_challenge_state(c, c)
    expected = np.kron(np.diag(c.coefficients), np.diag(c.coefficients))
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = random_unitary(joint.shape[0], rng)
        rho = reduced_state(apply_local_unitary(joint, "A", u), ["gamma_B", "beta_B"])
        assert np.max(np.abs(rho.matrix - expected)) < 1e-9


def test_product_state_schmidt_is_tensor():
    b, c = reference_states()
    joint = catalyst_challenge_state(c, b)
    assert joint.labels == ("gamma_A", "beta_A", "gamma_B", "beta_B")
    from catauth.schmidt import tensor_schmidt
    np.testing.assert_allclose(schmidt_of(joint).coefficients, tensor_schmidt(c, b).coefficients, atol=1e-12)


def test_reduced_state_order_and_trace():
    _, c = reference_states()
    joint = catalyst_challenge_state(c, c)
    rho = reduced_state(joint, ["beta_B", "gamma_A"])
    assert rho.dims == (5, 5)
    assert abs(np.trace(rho.matrix) - 1) < 1e-12
    with pytest.raises(StateError):
        reduced_state(joint, ["nope"])
    with pytest.raises(StateError):
        reduced_state(joint, [0, 0])


def test_fidelity_matches_closed_form():
    b, c = reference_states()
    f_state = fidelity_with(embed_schmidt(b), c)
    f_rho = fidelity_with(embed_schmidt(b).density(), c)
    assert f_state == pytest.approx(pure_fidelity(b, c), abs=1e-12)
    assert f_rho == pytest.approx(f_state, abs=1e-12)
    # overlap of the two reference states in the common Schmidt basis
    assert f_state == pytest.approx(0.880373, abs=1e-6)


def test_validation():
    with pytest.raises(StateError):
        BipartiteState(np.ones((2, 2)))
    with pytest.raises(StateError):
        BipartiteState(np.eye(2) / np.sqrt(2), a_dims=(3,))
    with pytest.raises(StateError):
        DensityOperator(np.diag([1.5, -0.5]))
    with pytest.raises(StateError):
        DensityOperator(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(StateError):
        apply_local_unitary(embed_schmidt([0.5, 0.5]), "A", np.ones((2, 2)))
    with pytest.raises(StateError):
        embed_schmidt([0.5, 0.5], shape=(1, 1))


def test_projective_measurement_statistics():
    b, c = reference_states()
    rng = np.random.default_rng(3)
    s = embed_schmidt(b)
    n = 4000
    hits = 0
    for _ in range(n):
        ok, post = measure_projector(s, c, rng)
        hits += ok
        if ok:
            assert fidelity_with(post, c) == pytest.approx(1.0)
        else:
            assert fidelity_with(post, c) == pytest.approx(0.0, abs=1e-12)
    p = pure_fidelity(b, c)
    assert abs(hits / n - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_sample_projective_test_extremes():
    rng = np.random.default_rng(0)
    assert all(sample_projective_test(1.0, rng) for _ in range(100))
    assert not any(sample_projective_test(0.0, rng) for _ in range(100))
    with pytest.raises(ValueError):
        sample_projective_test(1.1, rng)


def test_random_unitary_is_unitary():
    u = random_unitary(6, np.random.default_rng(1))
    assert np.allclose(u.conj().T @ u, np.eye(6))


def test_product_state_groups_parties():
    a = embed_schmidt([0.5, 0.5])
    b = embed_schmidt([1.0, 0.0])
    p = product_state(a, b)
    assert p.a_dims == (2, 2) and p.b_dims == (2, 2)


def test_embed_examples():
    np.testing.assert_allclose(embed_schmidt([1.0, 0.0]).amplitudes, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(embed_schmidt([0.5, 0.5]).amplitudes, np.diag([np.sqrt(0.5)] * 2))
    _, c = reference_states()
    np.testing.assert_allclose(embed_schmidt(c).amplitudes, np.diag(np.sqrt(c.coefficients)))


def test_optimal_state_fidelity():
    from catauth.schmidt import optimal_fidelity

    b, c = reference_states()
    f, xi = optimal_fidelity(b, c)
    assert fidelity_with(embed_schmidt(xi).density(), c) == pytest.approx(f, abs=1e-12)
    assert f == pytest.approx(0.9907, abs=1e-3)


@given(weights(max_dim=8))
@settings(max_examples=40)
def test_roundtrip_and_self_fidelity(w):
    x = make_schmidt(w)
    s = embed_schmidt(x)
    np.testing.assert_allclose(schmidt_of(s).coefficients, x.coefficients, atol=1e-12)
    assert fidelity_with(s, x) == pytest.approx(1.0, abs=1e-12)


@given(weights(max_dim=5), st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_marginal_spectrum_is_schmidt(w, seed):
    rng = np.random.default_rng(seed)
    x = make_schmidt(w)
    s = apply_local_unitary(embed_schmidt(x), "A", random_unitary(x.dim, rng))
    np.testing.assert_allclose(reduced_state(s, [1]).eigenvalues(), x.coefficients, atol=1e-10)
    np.testing.assert_allclose(reduced_state(s, [0]).eigenvalues(), x.coefficients, atol=1e-10)


def test_permutation_unitary_keeps_schmidt():
    _, c = reference_states()
    swap = np.eye(5)[[1, 0, 2, 3, 4]]
    s = apply_local_unitary(embed_schmidt(c), "A", swap)
    np.testing.assert_allclose(schmidt_of(s).coefficients, c.coefficients, atol=1e-12)
    same = apply_local_unitary(embed_schmidt(c), "B", np.eye(5))
    np.testing.assert_allclose(same.amplitudes, embed_schmidt(c).amplitudes)
