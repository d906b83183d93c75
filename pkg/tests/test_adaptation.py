import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from g2csim.adaptation import (AdaptConfig, Histogram, ThresholdAdapter, ThresholdState,
                               adapt_threshold, bin_index, detect, has_valley, observe,
                               valley_fraction)
from g2csim.errors import WindowNotFull


def filled(counts, lo, hi, **kw):
    """Histogram whose window holds exactly ``counts`` samples per bin."""
    b = len(counts)
    width = (hi - lo) // b
    cfg = AdaptConfig(num_bins=b, value_range=(lo, hi), window=sum(counts), **kw)
    h = Histogram(cfg)
    for k, n in enumerate(counts):
        for _ in range(n):
            observe(h, lo + k * width + width // 2)
    return h


def test_bin_edges():
    assert bin_index(-5, -5, 1000, 16) == 0
    assert bin_index(999, -5, 1000, 16) == 15
    assert bin_index(55, 0, 100, 4) == 2
    assert bin_index(-10 ** 6, 0, 100, 4) == 0
    assert bin_index(10 ** 6, 0, 100, 4) == 3


def test_argmin_midpoint_example():
    h = filled([5, 1, 0, 2, 7], 0, 100, sensitive_range=(0, 4))
    assert adapt_threshold(h).threshold == 50


def test_argmin_tie_break_lowest_index():
    h = filled([3, 0, 0, 3], 0, 80)
    assert adapt_threshold(h).threshold == 30


def test_window_not_full():
    h = Histogram(AdaptConfig(num_bins=4, value_range=(0, 8), window=8))
    observe(h, 1)
    with pytest.raises(WindowNotFull):
        adapt_threshold(h)


def test_detect_is_strict():
    assert not detect(7, 7)
    assert detect(8, 7)


def test_two_gaussian_stream_threshold_in_valley():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(20, 5, 2000), rng.normal(80, 5, 2000)])
    x = np.clip(np.rint(rng.permutation(x)), 0, 99).astype(int)
    h = Histogram(AdaptConfig(num_bins=16, value_range=(0, 100), window=len(x)))
    for v in x:
        h.observe(v)
    t = adapt_threshold(h).threshold
    assert 40 <= t <= 60
    # brute force: the valley bin is the least-occupied interior bin
    counts = np.bincount(np.minimum(16 * x // 100, 15), minlength=16)
    b = 1 + int(np.argmin(counts[1:15]))
    assert b * 100 / 16 <= t <= (b + 1) * 100 / 16


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-3000, 3000), min_size=1, max_size=400), st.integers(16, 64))
def test_histogram_conservation(xs, window):
    h = Histogram(AdaptConfig(window=window, value_range=(-1000, 1000)))
    for i, x in enumerate(xs):
        h.observe(x)
        assert h.counts.sum() == min(i + 1, window) == h.occupancy
        assert (h.counts >= 0).all()


def test_adapt_is_idempotent_on_unchanged_window():
    h = filled([4, 1, 3, 0, 2, 5], 0, 60)
    a = adapt_threshold(h)
    assert adapt_threshold(h).threshold == a.threshold


@settings(max_examples=30, deadline=None)
@given(st.integers(-5000, 5000))
def test_shift_equivariance(c):
    base = [5, 3, 4, 1, 6, 2, 7, 8]
    a = adapt_threshold(filled(base, 0, 160)).threshold
    b = adapt_threshold(filled(base, c, 160 + c)).threshold
    assert b - a == c


def test_unique_empty_bin_contains_threshold():
    h = filled([5, 4, 0, 3, 6], 0, 100)
    t = adapt_threshold(h).threshold
    lo, hi = h.bin_interval(2)
    assert lo < t < hi


def test_threshold_state_counts_updates():
    h = filled([3, 0, 0, 3], 0, 80)
    s = adapt_threshold(h, ThresholdState(0, -1, 4))
    assert s.update_count == 5 and s.last_update_sample == 6


def test_auto_range_rebins_to_window():
    cfg = AdaptConfig(num_bins=4, window=8)
    h = Histogram(cfg)
    for v in [100, 101, 102, 103, 196, 197, 198, 199]:
        h.observe(v)
    s = adapt_threshold(h)
    assert (h.lo, h.hi) == (100, 200)
    assert s.threshold == 138          # bins 1 and 2 tie empty; midpoint of [125, 150)


def test_sample_mean_mode():
    cfg = AdaptConfig(num_bins=4, value_range=(0, 80), window=4, threshold_mode="sample_mean",
                      sensitive_range=(0, 3))
    h = Histogram(cfg)
    for v in [1, 2, 21, 41]:           # bin 3 empty -> midpoint; make bin 1 the minimum
        h.observe(v)
    h2 = Histogram(cfg)
    for v in [1, 2, 3, 25]:
        h2.observe(v)
    assert adapt_threshold(h).threshold == 70
    assert adapt_threshold(h2).threshold == 50


def test_tumbling_window_clears():
    cfg = AdaptConfig(num_bins=4, value_range=(0, 80), window=4, window_mode="tumbling")
    ad = ThresholdAdapter(cfg)
    updates = [ad.push(v) for v in [1, 2, 70, 71, 5, 6, 7, 8]]
    assert [i for i, u in enumerate(updates) if u] == [3, 7]
    assert ad.hist.occupancy == 0


def test_refresh_cadence():
    cfg = AdaptConfig(num_bins=4, value_range=(0, 80), window=8)
    ad = ThresholdAdapter(cfg)
    fired = [i for i in range(30) if ad.push(i % 80)]
    assert fired == [7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29]


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(num_bins=1)
    with pytest.raises(ValueError):
        AdaptConfig(sensitive_range=(3, 20))
    with pytest.raises(ValueError):
        AdaptConfig(threshold_mode="median")


def test_has_valley():
    assert has_valley([5, 1, 0, 2, 7])
    assert not has_valley([1, 2, 3, 4])
    assert not has_valley([0, 9, 0, 0])


def test_valley_fraction_on_bimodal_scores():
    rng = np.random.default_rng(0)
    x = np.where(rng.random(5000) < 0.1, rng.normal(900, 40, 5000), rng.normal(200, 40, 5000))
    assert valley_fraction(np.rint(x).astype(int), AdaptConfig(window=1000)) == 1.0
    assert valley_fraction(rng.integers(0, 100, 5000), AdaptConfig(window=1000)) == 0.0
