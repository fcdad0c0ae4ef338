import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ledgermetrics.errors import InvalidM, InvalidTau, ZeroTotal
from ledgermetrics.metrics import (
    DEFAULT_METRICS,
    MetricSpec,
    concentration_ratio,
    entropy,
    evaluate,
    evaluate_all,
    gini,
    hhi,
    hhi_band,
    nakamoto,
    num_parties,
    tau_index,
    theil,
)
from ledgermetrics.model import distribution, vector


def test_entropy_examples():
    assert entropy(vector([7])) == 0.0
    assert entropy(vector([1, 1, 1, 1])) == 2.0
    assert entropy(vector([2, 1, 1])) == pytest.approx(1.5, abs=1e-15)


def test_entropy_other_base():
    assert entropy(vector([1] * 10), base=10) == pytest.approx(1.0, abs=1e-15)


def test_gini_examples():
    assert gini(vector([3, 2, 1])) == pytest.approx(2 / 9, abs=1e-12)
    assert gini(vector([3, 2, 1, 0])) == pytest.approx(5 / 12, abs=1e-12)
    assert gini(vector([4] * 9)) == 0.0


def test_nakamoto_examples():
    assert nakamoto(vector([1])) == 1
    assert nakamoto(vector([4, 3, 3])) == 2
    assert nakamoto(vector([1, 1])) == 2


def test_tau_examples():
    assert tau_index(vector([3, 3, 2, 2]), 0.33) == 2
    with pytest.raises(InvalidTau):
        tau_index(vector([1]), 1.0)
    with pytest.raises(InvalidTau):
        tau_index(vector([1]), 0.0)


def test_cr_examples():
    assert concentration_ratio(vector([5, 3, 2]), 2) == pytest.approx(0.8)
    assert concentration_ratio(vector([5, 3, 2]), 3) == 1.0
    assert concentration_ratio(vector([5, 3, 2]), 7) == 1.0
    with pytest.raises(InvalidM):
        concentration_ratio(vector([1]), 0)


def test_hhi_examples():
    assert hhi(vector([9])) == 10000.0
    assert hhi(vector([2, 2])) == 5000.0


def test_hhi_bands_switch_exactly():
    assert hhi_band(1499.999) == "unconcentrated"
    assert hhi_band(1500.0) == "moderate"
    assert hhi_band(2500.0) == "moderate"
    assert hhi_band(2500.0001) == "high"


def test_num_parties():
    assert num_parties(distribution({"A": 5, "B": 0})) == 1
    assert num_parties(distribution({})) == 0


def test_theil():
    assert theil(vector([2, 2, 2])) == pytest.approx(0.0, abs=1e-15)
    assert theil(vector([1, 0, 0, 0, 0])) == pytest.approx(math.log(5), abs=1e-12)


def test_zero_total_raises():
    d = distribution({}, ["A"])
    for f in (entropy, gini, nakamoto, hhi, theil):
        with pytest.raises(ZeroTotal):
            f(d)


def test_spec_labels_roundtrip():
    for spec in DEFAULT_METRICS:
        assert MetricSpec.parse(spec.label) == spec


def test_evaluate_flags():
    d = vector([5, 3, 2])
    assert evaluate(d, MetricSpec("cr", 5)).flags == ("m_exceeds_n",)
    assert "high" in evaluate(d, MetricSpec("hhi")).flags


def test_evaluate_all_skips_zero_total():
    out = evaluate_all(distribution({}, ["A"]))
    assert set(out) == {"parties"}


# oracles

def minimal_subset(shares, tau):
    """Fewest entities whose combined share exceeds tau, by exhaustive search."""
    n = len(shares)
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            if math.fsum(shares[i] for i in combo) > tau:
                return k
    return n


def gini_mad(x):
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    return np.abs(x[:, None] - x[None, :]).sum() / (2 * n * n * x.mean())


def random_vector(rng, nmax, zeros=True):
    n = int(rng.integers(1, nmax + 1))
    x = rng.integers(0 if zeros else 1, 60, size=n).astype(float)
    if x.sum() == 0:
        x[0] = 1
    return x


def test_nakamoto_tau_brute_force(rng):
    for _ in range(500):
        x = random_vector(rng, 15)
        d = vector(list(x))
        s = [v / x.sum() for v in x]
        # a subset beating tau is never smaller than the top-k prefix
        assert nakamoto(d) == minimal_subset(s, 0.5)
        for tau in (0.33, 0.5, 0.66):
            assert tau_index(d, tau) == minimal_subset(s, tau)


def test_gini_matches_mean_absolute_difference(rng):
    for _ in range(1000):
        x = random_vector(rng, 50)
        assert abs(gini(vector(list(x))) - gini_mad(x)) < 1e-9


def test_entropy_equal_is_log2n():
    for n in (2, 4, 8, 1024):
        assert abs(entropy(vector([1] * n)) - math.log2(n)) < 1e-12


amounts = st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=40).filter(lambda v: sum(v) > 0)


@settings(max_examples=200, deadline=None)
@given(amounts)
def test_bounds(x):
    d = vector(x)
    n = d.n
    assert -1e-12 <= entropy(d) <= math.log2(n) + 1e-9
    assert 0.0 <= gini(d) < 1.0
    assert 1 <= nakamoto(d) <= n
    assert 10000.0 / n - 1e-6 <= hhi(d) <= 10000.0 + 1e-6
    assert tau_index(d, 0.33) <= nakamoto(d) <= tau_index(d, 0.66)


@settings(max_examples=100, deadline=None)
@given(amounts, st.integers(min_value=1, max_value=50))
def test_cr_monotone_in_m(x, m):
    d = vector(x)
    assert concentration_ratio(d, m) <= concentration_ratio(d, m + 1) + 1e-15


def test_tau_half_is_nakamoto(rng):
    for _ in range(1000):
        d = vector(list(random_vector(rng, 30)))
        assert tau_index(d, 0.5) == nakamoto(d)
