import numpy as np
import pytest
from hypothesis import given, strategies as st

from catauth.schmidt import (
    REFERENCE_B, REFERENCE_C, SchmidtError, SchmidtVector, block_target, conversion_probability,
    convert, is_catalyst, majorizes, make_schmidt, optimal_fidelity, pad_pair, reference_p0,
    reference_states, pure_fidelity, tensor_schmidt,
)

from conftest import weights


def prefix_majorizes(y, x, tol=1e-12):
    """Independent check via sorted prefix sums in plain Python."""
    n = max(len(x), len(y))
    ys = sorted(list(y) + [0.0] * (n - len(y)), reverse=True)
    xs = sorted(list(x) + [0.0] * (n - len(x)), reverse=True)
    sy = sx = 0.0
    for a, b in zip(ys, xs):
        sy += a
        sx += b
        if sy < sx - tol:
            return False
    return True


class TestSchmidtVector:
    def test_make_sorts_and_normalizes(self):
        v = make_schmidt([1, 3, 0, 2])
        assert v.tolist() == pytest.approx([0.5, 2 / 6, 1 / 6, 0.0], abs=1e-15)
        assert v.dim == 4 and v.rank == 3

    def test_direct_construction_validates(self):
        with pytest.raises(SchmidtError):
            SchmidtVector([0.2, 0.8])
        with pytest.raises(SchmidtError):
            SchmidtVector([0.5, 0.4])
        with pytest.raises(SchmidtError):
            SchmidtVector([1.2, -0.2])
        with pytest.raises(SchmidtError):
            make_schmidt([0, 0])
        with pytest.raises(SchmidtError):
            make_schmidt([np.nan, 1])
        with pytest.raises(SchmidtError):
            make_schmidt([])

    def test_immutable_and_hashable(self):
        v = make_schmidt([2, 1])
        with pytest.raises(ValueError):
            v.coefficients[0] = 0.1
        assert {v: 1}[make_schmidt([4, 2])] == 1

    def test_padding(self):
        x, y = pad_pair([1.0], [0.5, 0.5])
        assert x.tolist() == [1.0, 0.0] and y.dim == 2
        with pytest.raises(ValueError):
            make_schmidt([0.5, 0.5]).padded(1)

    def test_tail_sums(self):
        np.testing.assert_allclose(make_schmidt([0.5, 0.3, 0.2]).tail_sums(), [1.0, 0.5, 0.2])

    @given(weights())
    def test_invariants_hold(self, w):
        v = make_schmidt(w)
        assert abs(v.coefficients.sum() - 1) < 1e-12
        assert np.all(np.diff(v.coefficients) <= 0)
        assert np.all(v.coefficients >= 0)


class TestMajorization:
    def test_reference_pair(self):
        b, c = reference_states()
        assert not majorizes(c, b)
        assert majorizes(tensor_schmidt(c, c), tensor_schmidt(b, c))
        assert is_catalyst(c, b, c)

    def test_product_state_majorizes_everything(self):
        assert majorizes([1.0], [0.25] * 4)
        assert not majorizes([0.25] * 4, [1.0])

    def test_tolerance(self):
        x = [0.5, 0.5]
        y = [0.5 - 1e-13, 0.5 + 1e-13]
        assert majorizes(make_schmidt(y), make_schmidt(x))

    def test_catalyst_not_needed(self):
        # direct conversion possible, so nothing is a catalyst for it
        assert not is_catalyst([0.5, 0.5], [0.5, 0.5], [1.0, 0.0])

    @given(weights(), weights())
    def test_matches_prefix_sums(self, a, b):
        x, y = make_schmidt(a), make_schmidt(b)
        assert majorizes(y, x) == prefix_majorizes(y.tolist(), x.tolist())

    @given(weights(), weights(), weights())
    def test_preorder(self, a, b, c):
        x, y, z = make_schmidt(a), make_schmidt(b), make_schmidt(c)
        assert majorizes(x, x)
        if majorizes(y, x) and majorizes(z, y):
            assert majorizes(z, x)

    @given(weights(max_dim=4), weights(max_dim=4), weights(max_dim=3))
    def test_tensoring_preserves_order(self, a, b, g):
        x, y = pad_pair(a, b)
        if majorizes(y, x):
            assert majorizes(tensor_schmidt(y, g), tensor_schmidt(x, g))

    @given(weights(max_dim=4), weights(max_dim=4))
    def test_tensor_normalized(self, a, b):
        t = tensor_schmidt(a, b)
        assert t.dim == len(a) * len(b)
        assert abs(t.coefficients.sum() - 1) < 1e-12


class TestConversionProbability:
    def test_reference_value(self):
        b, c = reference_states()
        # smallest tail ratio is at the fourth level: 0.08 / 0.14
        assert conversion_probability(b, c) == pytest.approx(0.08 / 0.14, abs=1e-15)

    def test_two_level(self):
        # E_2(b)/E_2(c) = 0.2/0.5
        assert conversion_probability([0.8, 0.2], [0.5, 0.5]) == pytest.approx(0.4)

    def test_unreachable_rank(self):
        assert conversion_probability([1.0, 0.0], [0.5, 0.5]) == 0.0

    @given(weights(), weights())
    def test_range_and_deterministic_case(self, a, b):
        x, y = make_schmidt(a), make_schmidt(b)
        p = conversion_probability(x, y)
        assert 0.0 <= p <= 1.0
        if majorizes(y, x):
            assert p == 1.0
        else:
            assert p < 1.0 + 1e-12


class TestOptimalFidelity:
    def test_reference_value(self):
        b, c = reference_states()
        f, chi = optimal_fidelity(b, c)
        assert f == pytest.approx(0.9907, abs=5e-5)
        # chi keeps the first three levels proportional to c and matches b's fourth tail
        scale = 0.92 / 0.86
        np.testing.assert_allclose(chi.coefficients, [0.48 * scale, 0.24 * scale, 0.14 * scale, 0.08, 0.0], atol=1e-12)
        assert majorizes(chi, b)
        assert pure_fidelity(chi, c) == pytest.approx(f, abs=1e-15)
        assert reference_p0() == f

    def test_two_level_closed_form(self):
        f, chi = optimal_fidelity([0.8, 0.2], [0.5, 0.5])
        assert chi.tolist() == pytest.approx([0.8, 0.2])
        assert f == pytest.approx((np.sqrt(0.4) + np.sqrt(0.1)) ** 2)

    def test_reachable_target(self):
        f, chi = optimal_fidelity([0.5, 0.5], [0.9, 0.1])
        assert f == 1.0 and chi == make_schmidt([0.9, 0.1])

    def test_block_target_all_singletons_is_b(self):
        b, c = reference_states()
        np.testing.assert_allclose(block_target(b, c, (1 << 4) - 1), b.coefficients)

    @given(weights(max_dim=5), weights(max_dim=5))
    def test_bounds(self, a, b):
        x, y = pad_pair(a, b)
        f, chi = optimal_fidelity(x, y)
        assert pure_fidelity(x, y) - 1e-12 <= f <= 1.0
        assert majorizes(chi, x)

    def test_convert_report(self):
        b, c = reference_states()
        r = convert(b, c)
        assert not r.deterministic
        assert r.probability == pytest.approx(0.5714, abs=1e-4)
        assert r.fidelity == pytest.approx(0.9907, abs=5e-5)


def test_reference_constants_are_the_literal_states():
    b, c = reference_states()
    assert b.tolist() == list(REFERENCE_B) and c.tolist() == list(REFERENCE_C)


class TestSpecExamples:
    def test_make_schmidt_examples(self):
        assert make_schmidt(REFERENCE_B).tolist() == list(REFERENCE_B)
        assert make_schmidt([2, 2]).tolist() == [0.5, 0.5]
        assert make_schmidt([0.1, 0.9]).tolist() == [0.9, 0.1]

    def test_uniform_is_majorized_by_everything(self):
        assert majorizes(make_schmidt([0.7, 0.2, 0.1]), make_schmidt([1, 1, 1]))

    def test_tensor_examples(self):
        x = make_schmidt([0.6, 0.3, 0.1])
        np.testing.assert_allclose(tensor_schmidt([1.0], x).coefficients, x.coefficients, atol=1e-15)
        assert tensor_schmidt([0.5, 0.5], [0.5, 0.5]).tolist() == [0.25] * 4

    def test_catalyst_examples(self):
        b, c = reference_states()
        assert not is_catalyst([1.0], b, c)
        assert not is_catalyst(c, c, c)

    def test_probability_identity(self):
        b, _ = reference_states()
        assert conversion_probability(b, b) == 1.0


class TestSpecProperties:
    @given(weights(), weights())
    def test_antisymmetry(self, a, b):
        x, y = pad_pair(a, b)
        if majorizes(x, y) and majorizes(y, x):
            np.testing.assert_allclose(x.coefficients, y.coefficients, atol=1e-9)

    @given(weights(max_dim=4), weights(max_dim=4))
    def test_tensor_commutes(self, a, b):
        np.testing.assert_allclose(tensor_schmidt(a, b).coefficients, tensor_schmidt(b, a).coefficients, atol=1e-15)

    @given(weights(max_dim=5), weights(max_dim=5))
    def test_probability_and_fidelity(self, a, b):
        x, y = pad_pair(a, b)
        p = conversion_probability(x, y)
        f = optimal_fidelity(x, y)[0]
        assert p <= f + 1e-12
        det = majorizes(y, x)
        assert (p == 1.0) == det
        assert (f == 1.0) == det or (not det and f > 1 - 1e-12)

    @given(weights(max_dim=3), weights(max_dim=3), weights(max_dim=3))
    def test_catalysis_soundness(self, g, a, b):
        x, y = pad_pair(a, b)
        if is_catalyst(g, x, y):
            assert majorizes(tensor_schmidt(y, g), tensor_schmidt(x, g))
