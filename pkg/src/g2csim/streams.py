"""Synthetic beat streams and the beat CSV format.

Each beat is one ``3 x 16 x 64`` int8 frame: 1024 samples per lead folded
row-major, with the beat's main deflection centred in the frame. Normal
beats carry a narrow spike; anomalous beats a wide, slightly taller bump
(more rectified area, hence a higher detector score). Drift adds a DC
offset that grows linearly from 0 to ``drift * AMPLITUDE`` over the stream,
moving both score clusters together.

CSV layout: header ``beat_index,label,s0,...,s{n-1}``, one beat per row.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRate
from .reference import FRAME_SHAPE

AMPLITUDE = 20.0
NOISE_SD = 3.0
NARROW_WIDTH = 0.01          # fraction of the frame
WIDE_WIDTH = 0.05
LEAD_GAINS = (1.0, 0.8, 0.6)
JITTER = 0.1


@dataclass
class Stream:
    labels: np.ndarray       # (n,) uint8, 1 = anomaly
    frames: np.ndarray       # (n, C, H, W) int8

    def __len__(self):
        return len(self.labels)


def _beat(rng, anomaly, offset, shape):
    c, h, w = shape
    t = np.arange(h * w) / (h * w)
    amp = AMPLITUDE * (1 + JITTER * rng.uniform(-1, 1))
    width = (WIDE_WIDTH if anomaly else NARROW_WIDTH) * (1 + JITTER * rng.uniform(-1, 1))
    centre = 0.5 + 0.01 * rng.uniform(-1, 1)
    wave = amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
    gains = np.resize(np.asarray(LEAD_GAINS), c)
    frame = gains[:, None] * wave[None, :] + offset + rng.normal(0, NOISE_SD, (c, h * w))
    return np.clip(np.rint(frame), -128, 127).astype(np.int8).reshape(shape)


def gen_stream(seed, n_beats, anomaly_rate, drift=0.0, shape=FRAME_SHAPE):
    """Seeded stream with exactly ``round(anomaly_rate * n_beats)`` anomalies."""
    if not 0 <= anomaly_rate <= 1:
        raise InvalidRate(f"anomaly rate {anomaly_rate} outside [0, 1]")
    rng = np.random.default_rng(seed)
    labels = np.zeros(n_beats, dtype=np.uint8)
    n_anom = int(round(anomaly_rate * n_beats))
    labels[rng.permutation(n_beats)[:n_anom]] = 1
    frames = np.empty((n_beats,) + tuple(shape), dtype=np.int8)
    for i in range(n_beats):
        offset = drift * AMPLITUDE * (i / max(n_beats - 1, 1))
        frames[i] = _beat(rng, labels[i], offset, shape)
    return Stream(labels, frames)


def write_stream(path_or_file, stream):
    n = stream.frames[0].size if len(stream) else 0
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["beat_index", "label"] + [f"s{i}" for i in range(n)])
        for i, (lab, fr) in enumerate(zip(stream.labels, stream.frames)):
            w.writerow([i, int(lab)] + fr.reshape(-1).tolist())
    finally:
        if own:
            f.close()


def read_stream(path, shape=FRAME_SHAPE):
    """Read a beat CSV. Raises ValueError on ragged rows or out-of-range samples."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:2] != ["beat_index", "label"]:
        raise ValueError("beat CSV must start with beat_index,label")
    width = len(rows[0]) - 2
    if width != int(np.prod(shape)):
        raise ValueError(f"{width} samples per beat, frame needs {int(np.prod(shape))}")
    data = []
    for r in rows[1:]:
        if len(r) != width + 2:
            raise ValueError("ragged row in beat CSV")
        data.append([int(v) for v in r])
    arr = np.asarray(data, dtype=np.int64).reshape(-1, width + 2)
    samples = arr[:, 2:]
    if samples.size and (samples.min() < -128 or samples.max() > 127):
        raise ValueError("beat samples outside int8 range")
    labels = arr[:, 1]
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    return Stream(labels.astype(np.uint8), samples.astype(np.int8).reshape((-1,) + tuple(shape)))


def read_scores(path):
    """Single-column score CSV (header ``score``) for the adaptation demo."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "score":
        raise ValueError("score CSV must have a 'score' header")
    return np.asarray([int(r[0]) for r in rows[1:]], dtype=np.int64)
