import numpy as np
import pytest
from scipy.stats import studentized_range

from odesign.stats import srange_cdf, srange_quantile
from oracles import mc_studentized_range_quantile


def test_two_groups_infinite_df_closed_form():
    # range of two normals is sqrt(2) |Z|: quantile = sqrt(2) z_{0.975}
    q = srange_quantile(0.05, 2, np.inf)
    assert abs(q - 1.9599639845 * np.sqrt(2.0)) < 1e-4


def test_known_four_group_value():
    # classic table value for q_{0.05}(4, inf)
    q = srange_quantile(0.05, 4, np.inf)
    assert abs(q - 3.633) < 5e-3


def test_monte_carlo_agreement_small():
    q = srange_quantile(0.05, 3, np.inf)
    q_mc = mc_studentized_range_quantile(0.05, 3, 2_000_000, seed=1)
    assert abs(q - q_mc) < 0.01


def test_monotone_in_k():
    qs = [srange_quantile(0.05, k, np.inf) for k in (2, 3, 4, 6, 8)]
    assert all(b > a for a, b in zip(qs, qs[1:]))


@pytest.mark.parametrize("k,df", [(3, 10), (4, 60), (4, 3996), (5, 500)])
def test_matches_scipy_finite_df(k, df):
    for alpha in (0.05, 0.01):
        mine = srange_quantile(alpha, k, df)
        ref = studentized_range.ppf(1 - alpha, k, df)
        assert abs(mine - ref) < 2e-3, (k, df, alpha, mine, ref)


def test_cdf_quantile_round_trip():
    for k, df in [(4, np.inf), (3, 3996), (6, 50)]:
        q = srange_quantile(0.05, k, df)
        assert abs(srange_cdf(q, k, df) - 0.95) < 1e-4


def test_cdf_edges():
    assert srange_cdf(-1.0, 4, np.inf) == 0.0
    assert srange_cdf(0.0, 4, np.inf) == 0.0
    assert srange_cdf(50.0, 4, np.inf) == pytest.approx(1.0, abs=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        srange_quantile(0.0, 4, np.inf)
    with pytest.raises(ValueError):
        srange_quantile(0.05, 1, np.inf)
    with pytest.raises(ValueError):
        srange_cdf(3.0, 4, 0.5)
