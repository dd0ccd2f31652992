from fractions import Fraction

import numpy as np
import pytest

from catauth.schmidt import REFERENCE_B, REFERENCE_C, conversion_probability, optimal_fidelity, reference_states

from oracles import fidelity_by_convex_program, random_pair


def tail_ratio_exact(b, c):
    """Minimum tail ratio in exact rational arithmetic."""
    b = [Fraction(str(v)) for v in b]
    c = [Fraction(str(v)) for v in c]
    ratios = [sum(b[l:]) / sum(c[l:]) for l in range(len(b)) if sum(c[l:]) > 0]
    return min(min(ratios), Fraction(1))


def test_reference_probability_exact():
    assert tail_ratio_exact(REFERENCE_B, REFERENCE_C) == Fraction(4, 7)
    assert conversion_probability(*reference_states()) == pytest.approx(float(Fraction(4, 7)), abs=1e-15)


def test_reference_fidelity_convex_program():
    b, c = reference_states()
    assert optimal_fidelity(b, c)[0] == pytest.approx(fidelity_by_convex_program(b.coefficients, c.coefficients), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_random_pairs_convex_program(seed):
    rng = np.random.default_rng(seed)
    for _ in range(8):
        b, c = random_pair(rng)
        f, oracle = optimal_fidelity(b, c)[0], fidelity_by_convex_program(b, c)
        # a feasible point cannot beat the optimum; float residue near zero entries
        # still moves the square roots by ~1e-8
        assert oracle <= f + 1e-7
        assert abs(f - oracle) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_random_pairs_probability(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(20):
        b, c = random_pair(rng)
        b = np.round(b, 6)
        c = np.round(c, 6)
        b[0] += 1 - b.sum()
        c[0] += 1 - c.sum()
        assert conversion_probability(b, c) == pytest.approx(float(tail_ratio_exact(b, c)), abs=1e-9)


def test_polished_oracle_tight_agreement():
    # with the active set taken from the solver, agreement reaches 1e-9
    from oracles import fidelity_polished

    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(60):
        b, c = random_pair(rng)
        f = fidelity_polished(b, c)
        if np.isnan(f):
            continue
        checked += 1
        assert optimal_fidelity(b, c)[0] == pytest.approx(f, abs=1e-9)
    assert checked >= 50
