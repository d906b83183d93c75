"""Detection-threshold adaptation.

Detector scores are binned into a ``B``-bin histogram over a window of the
most recent ``N_w`` outputs (the stand-in for "T days" of operation). On
each update the least-populated bin inside the sensitive bin range is
picked, lowest index first on ties, and the threshold moves to that bin's
midpoint. Binning is ``floor(B * (x - lo) / (hi - lo))`` clamped to the edge
bins, which is what a chain of ``B - 1`` comparators against the bin edges
computes.

With ``value_range=None`` the range is re-derived from the window contents
(``[min, max + 1)``) at every update and the histogram is rebuilt; before
the first update it spans the full signed 16-bit range.
"""
from collections import deque
from dataclasses import dataclass
import math
from typing import Optional, Tuple

import numpy as np

from .errors import WindowNotFull

INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1


@dataclass(frozen=True)
class AdaptConfig:
    num_bins: int = 16
    value_range: Optional[Tuple[int, int]] = None   # [lo, hi); None = from the window
    window: int = 4096
    t_days: int = 3                                   # report metadata only
    sensitive_range: Optional[Tuple[int, int]] = None  # inclusive bins; None = [1, B-2]
    refresh: Optional[int] = None                     # None = window // 4
    threshold_mode: str = "midpoint"                  # or "sample_mean"
    window_mode: str = "sliding"                      # or "tumbling"
    initial_threshold: int = 0

    def __post_init__(self):
        if self.num_bins < 2:
            raise ValueError("need at least two bins")
        if self.window < self.num_bins:
            raise ValueError("window must hold at least one sample per bin")
        if self.value_range is not None:
            lo, hi = self.value_range
            if not lo < hi:
                raise ValueError("value_range needs lo < hi")
        b_lo, b_hi = self.sensitive_bins
        if not 0 <= b_lo <= b_hi < self.num_bins:
            raise ValueError("sensitive range must be a bin interval inside [0, B)")
        if self.threshold_mode not in ("midpoint", "sample_mean"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.window_mode not in ("sliding", "tumbling"):
            raise ValueError(f"unknown window_mode {self.window_mode!r}")
        if self.refresh is not None and self.refresh < 1:
            raise ValueError("refresh interval must be positive")

    @property
    def sensitive_bins(self):
        if self.sensitive_range is None:
            return (1, self.num_bins - 2) if self.num_bins > 2 else (0, self.num_bins - 1)
        return tuple(self.sensitive_range)

    @property
    def refresh_interval(self):
        return self.refresh if self.refresh is not None else max(1, self.window // 4)


@dataclass(frozen=True)
class ThresholdState:
    threshold: int
    last_update_sample: int = -1
    update_count: int = 0


def bin_index(x, lo, hi, num_bins):
    b = (num_bins * (int(x) - lo)) // (hi - lo)
    return min(max(b, 0), num_bins - 1)


class Histogram:
    """Windowed histogram of detector outputs (one writer)."""

    def __init__(self, cfg=AdaptConfig()):
        self.cfg = cfg
        self.counts = np.zeros(cfg.num_bins, dtype=np.int64)
        self.ring = deque()
        self.samples_seen = 0
        self.lo, self.hi = cfg.value_range if cfg.value_range else (INT16_MIN, INT16_MAX + 1)

    @property
    def occupancy(self):
        return len(self.ring)

    @property
    def full(self):
        return len(self.ring) >= self.cfg.window

    def bin_of(self, x):
        return bin_index(x, self.lo, self.hi, self.cfg.num_bins)

    def observe(self, x):
        x = int(x)
        if len(self.ring) == self.cfg.window:
            self.counts[self.bin_of(self.ring.popleft())] -= 1
        self.ring.append(x)
        b = self.bin_of(x)
        self.counts[b] += 1
        self.samples_seen += 1
        return b

    def evict(self):
        """Drop the oldest sample; returns it (None if the window is empty)."""
        if not self.ring:
            return None
        x = self.ring.popleft()
        self.counts[self.bin_of(x)] -= 1
        return x

    def rebin(self, lo, hi):
        if not lo < hi:
            raise ValueError("rebin needs lo < hi")
        self.lo, self.hi = int(lo), int(hi)
        self.counts[:] = 0
        if self.ring:
            vals = np.fromiter(self.ring, dtype=np.int64)
            b = np.clip((self.cfg.num_bins * (vals - lo)) // (hi - lo), 0, self.cfg.num_bins - 1)
            np.add.at(self.counts, b, 1)

    def clear(self):
        self.ring.clear()
        self.counts[:] = 0

    def bin_interval(self, b):
        w = (self.hi - self.lo) / self.cfg.num_bins
        return self.lo + b * w, self.lo + (b + 1) * w


def observe(hist, detector_output):
    hist.observe(detector_output)
    return hist


def adapt_threshold(hist, state=None, cfg=None):
    """Move the threshold to the least-occupied sensitive bin of the window."""
    cfg = cfg or hist.cfg
    if not hist.full:
        raise WindowNotFull(f"{hist.occupancy} of {cfg.window} samples in the window")
    if cfg.value_range is None:
        hist.rebin(min(hist.ring), max(hist.ring) + 1)
    b_lo, b_hi = cfg.sensitive_bins
    b = b_lo + int(np.argmin(hist.counts[b_lo:b_hi + 1]))   # first minimum wins
    a, z = hist.bin_interval(b)
    thr = math.floor((a + z) / 2 + 0.5)
    if cfg.threshold_mode == "sample_mean" and hist.counts[b] > 0:
        members = [v for v in hist.ring if hist.bin_of(v) == b]
        thr = math.floor(sum(members) / len(members) + 0.5)
    thr = min(max(thr, hist.lo), hist.hi, INT16_MAX)
    prev = state if state is not None else ThresholdState(cfg.initial_threshold)
    if cfg.window_mode == "tumbling":
        hist.clear()
    return ThresholdState(int(thr), hist.samples_seen, prev.update_count + 1)


def detect(output, threshold):
    return int(output) > int(threshold)


class ThresholdAdapter:
    """Histogram plus threshold with the refresh cadence used on-line."""

    def __init__(self, cfg=AdaptConfig()):
        self.cfg = cfg
        self.hist = Histogram(cfg)
        self.state = ThresholdState(cfg.initial_threshold)

    @property
    def threshold(self):
        return self.state.threshold

    def due(self):
        if not self.hist.full:
            return False
        if self.state.update_count == 0 or self.cfg.window_mode == "tumbling":
            return True
        return self.hist.samples_seen - self.state.last_update_sample >= self.cfg.refresh_interval

    def push(self, output):
        """Observe one output; return the new state if an update fired."""
        self.hist.observe(output)
        if self.due():
            self.state = adapt_threshold(self.hist, self.state, self.cfg)
            return self.state
        return None


def has_valley(counts, depth=0.5):
    """True if some interior bin holds less than ``depth`` times the smaller
    of the tallest bins on either side of it (two modes with a dip between)."""
    c = np.asarray(counts, dtype=np.int64)
    for k in range(1, len(c) - 1):
        left, right = c[:k].max(), c[k + 1:].max()
        if min(left, right) > 0 and c[k] < depth * min(left, right):
            return True
    return False


def valley_fraction(scores, cfg=AdaptConfig()):
    """Fraction of update windows over ``scores`` whose histogram has a valley.

    Windows are the ones the adapter would see: the first full window and
    every refresh interval after it, binned over the window's own range.
    """
    scores = np.asarray(scores, dtype=np.int64)
    n, w = len(scores), cfg.window
    ends = range(w, n + 1, cfg.refresh_interval)
    hits = total = 0
    for end in ends:
        win = scores[end - w:end]
        lo, hi = (cfg.value_range if cfg.value_range else (int(win.min()), int(win.max()) + 1))
        b = np.clip((cfg.num_bins * (win - lo)) // (hi - lo), 0, cfg.num_bins - 1)
        hits += has_valley(np.bincount(b, minlength=cfg.num_bins))
        total += 1
    return hits / total if total else 0.0
