import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from satdlsa.channel import (ChannelSampler, ChannelSpec, LinearRate, LogLinearRate,
                             RateDomainError, check_rate_properties, rate, sample_state)
from satdlsa.model import paper_config


def test_equiprobable_state_frequencies():
    cfg = paper_config(seed=11)
    sampler = ChannelSampler(cfg)
    draws = np.array([sampler.alpha_links(t) for t in range(100_000)])
    for a in (3.0, 1.0, 2.0, 0.0):
        freq = (draws == a).mean(axis=0)
        assert np.all(np.abs(freq - 0.25) <= 0.01)
    # chi-square over the 4 states, 3 dof per link; 99.9% quantile is 16.27
    counts = np.stack([(draws == a).sum(axis=0) for a in (3.0, 1.0, 2.0, 0.0)])
    chi2 = ((counts - 25_000) ** 2 / 25_000).sum(axis=0)
    assert np.all(chi2 < 16.27)


def test_degenerate_unreachable_distribution():
    cfg = paper_config()
    spec = ChannelSpec.uniform(cfg.channel_spec.labels, cfg.channel_spec.alphas,
                               [0, 0, 0, 1], cfg.links)
    st_ = sample_state(cfg.replace(channel_spec=spec), 5, 7)
    assert np.all(st_.alpha == 0)
    assert np.all(st_.state_labels[st_.state_labels >= 0] == 3)


def test_same_seed_same_slot():
    cfg = paper_config()
    a, b = sample_state(cfg, 3, 7), sample_state(cfg, 3, 7)
    assert np.array_equal(a.alpha, b.alpha)
    assert not np.array_equal(a.alpha, sample_state(cfg, 4, 7).alpha)


def test_batched_matches_single_slot():
    cfg = paper_config(seed=42)
    sampler = ChannelSampler(cfg, batch=64)
    for t in (0, 1, 63, 64, 65, 1000, 4097):
        assert np.array_equal(sampler.sample(t).alpha, sample_state(cfg, 42, t).alpha)


def test_alpha_zero_off_links():
    cfg = paper_config()
    s = sample_state(cfg, 1, 0)
    assert np.all(np.diag(s.alpha) == 0)
    assert np.all(np.diag(s.state_labels) == -1)


def test_rate_values():
    assert rate(3, 2, 1) == pytest.approx(float(mpmath.log(7)), abs=1e-12)
    assert rate(3, 2, 0) == 0.0
    assert rate(0, 6, 1) == 0.0


@pytest.mark.parametrize("p", [-0.1, 6.5])
def test_rate_domain(p):
    with pytest.raises(RateDomainError):
        rate(3, p, 1, power_cap=6)


def test_rate_concave_increasing():
    p = np.linspace(0, 6, 601)
    for a in (1.0, 2.0, 3.0):
        mu = LogLinearRate()(a, p)
        assert np.all(np.diff(mu) > 0)
        assert np.all(np.diff(mu, 2) <= 1e-15)


def test_default_rate_properties():
    rep = check_rate_properties(LogLinearRate(), range(4), range(7))
    assert rep.passed
    assert rep.delta <= 3


def test_zero_power_grid():
    rep = check_rate_properties(LogLinearRate(), range(4), [0.0])
    assert rep.property1 and rep.delta == 0.0


def test_superlinear_rate_fails_property_one():
    rep = check_rate_properties(lambda a, p, g: np.exp(np.multiply(p, g)), range(4), range(7))
    assert not rep.property1


def test_coupled_rate_fails_property_two():
    # each link's rate grows with total power: zeroing one link lowers the others
    def coupled(a, p, g):
        p = np.asarray(p, dtype=float)
        return np.log1p(np.multiply(a, p) * g * (1.0 + 0.01 * p.sum()))

    assert not check_rate_properties(coupled, range(4), range(7)).property2


def test_disconnected_power_matters_fails_property_three():
    def leaky(a, p, g):
        p = np.asarray(p, dtype=float)
        return np.log1p(np.multiply(a, p) * g) + 1e-3 * (p * (1 - np.asarray(g))).sum()

    assert not check_rate_properties(leaky, range(4), range(7)).property3


def test_linear_rate_properties():
    rep = check_rate_properties(LinearRate(), range(4), range(7))
    assert rep.passed and rep.delta == pytest.approx(3.0)


@given(st.floats(0, 3), st.floats(0, 6), st.floats(0, 6))
def test_rate_monotone_in_power(a, p1, p2):
    lo, hi = sorted((p1, p2))
    assert rate(a, lo) <= rate(a, hi)
    assert rate(a, hi) <= math.log1p(3 * 6)
