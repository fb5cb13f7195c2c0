"""Error-signal conditioning: IIR smoothing, windowed velocity, smooth dead-zone."""

from __future__ import annotations

import csv
import json
from collections import deque
from pathlib import Path

import numpy as np


class IirFilter:
    """First-order low-pass ``s <- (1 - zeta) s + zeta x``, seeded by the first sample."""

    def __init__(self, zeta: float = 0.1):
        if not 0.0 < zeta <= 1.0:
            raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
        self.zeta = zeta
        self.state = None

    def step(self, sample) -> np.ndarray:
        sample = np.array(sample, float)
        if self.state is None:
            self.state = sample
        else:
            # same as (1 - zeta) s + zeta x, but leaves a constant input exactly fixed
            self.state = self.state + self.zeta * (sample - self.state)
        return self.state.copy()

    def transform(self, matrix) -> None:
        """Re-express the internal state in new coordinates ``y = matrix @ x``."""
        if self.state is not None:
            self.state = np.asarray(matrix) @ self.state


def iir_step(f: IirFilter, sample) -> np.ndarray:
    return f.step(sample)


class VelocityEstimator:
    """Moving average of the last ``window`` backward differences, divided by ``dt``."""

    def __init__(self, window: int = 30, dt: float = 0.002):
        if window < 1:
            raise ValueError("window must be at least 1")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.window = window
        self.dt = dt
        self.prev = None
        self.diffs = deque(maxlen=window)

    def step(self, position) -> np.ndarray:
        position = np.array(position, float)
        if self.prev is not None:
            self.diffs.append(position - self.prev)
        self.prev = position
        if not self.diffs:
            return np.zeros_like(position)
        return np.mean(self.diffs, axis=0) / self.dt

    def transform(self, matrix) -> None:
        matrix = np.asarray(matrix)
        if self.prev is not None:
            self.prev = matrix @ self.prev
        self.diffs = deque((matrix @ d for d in self.diffs), maxlen=self.window)


def velocity_step(v: VelocityEstimator, filtered_pos) -> np.ndarray:
    return v.step(filtered_pos)


def moving_average_response(freq_hz: float, window: int, dt: float) -> complex:
    """Frequency response of differencing followed by a ``window``-tap average, per unit
    of the true derivative (1.0 means exact differentiation)."""
    w = 2 * np.pi * freq_hz * dt
    zinv = np.exp(-1j * w)
    diff = (1 - zinv) / dt
    avg = sum(zinv**k for k in range(window)) / window
    return diff * avg / (1j * 2 * np.pi * freq_hz)


def dead_zone(x, a):
    """Smooth dead-zone ``x - (2a/pi) atan(pi x / (2a))``; identity when ``a == 0``."""
    x = np.asarray(x, float)
    a = np.asarray(a, float)
    if np.any(a < 0):
        raise ValueError("dead-zone threshold must be non-negative")
    safe = np.where(a > 0, a, 1.0)
    y = x - np.arctan(np.pi * x / (2 * safe)) * 2 * safe / np.pi
    y = np.where(a > 0, y, x)
    return y if y.ndim else float(y)


def dead_zone_attenuation() -> float:
    """Fractional attenuation at the threshold, ``1 - y(a)/a``."""
    return float((2 / np.pi) * np.arctan(np.pi / 2))


def calibrate_thresholds(samples, min_samples: int = 100) -> np.ndarray:
    """Per-channel sample standard deviation of an error trace (rows are samples)."""
    data = np.asarray(samples, float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] == 0 or data.shape[1] == 0:
        raise ValueError("trace has no samples")
    if data.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {data.shape[0]}")
    if np.any(~np.isfinite(data)):
        raise ValueError("trace contains non-finite samples")
    # shifting by the first sample keeps constant channels at exactly zero
    return (data - data[0]).std(axis=0, ddof=1)


def read_trace_channels(path, prefix: str = "e_filt") -> np.ndarray:
    """Columns ``prefix0..`` of a trace CSV as an array (samples x channels)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = [n for n in reader.fieldnames or [] if n.startswith(prefix)]
        if not names:
            raise ValueError(f"no {prefix}* columns in {path}")
        names.sort(key=lambda n: int(n[len(prefix):]))
        rows = [[float(row[n]) for n in names] for row in reader]
    return np.array(rows).reshape(-1, len(names))


def write_thresholds(path, thresholds) -> None:
    Path(path).write_text(json.dumps({"thresholds": [float(a) for a in thresholds]}, indent=2))


def read_thresholds(path) -> np.ndarray:
    return np.array(json.loads(Path(path).read_text())["thresholds"], float)


def reanchor(pos, landing) -> np.ndarray:
    """Relative position errors ``[swing, pelvis]`` re-expressed after a foot exchange.

    ``landing`` is the measured swing-foot error at touchdown; anchoring on it rather
    than on the smoothed swing channel keeps the smoothing lag out of the pelvis channel.
    """
    pos = np.asarray(pos, float)
    landing = np.asarray(landing, float)
    return np.concatenate([-landing, pos[2:] - landing])


class ErrorFilterBank:
    """Position IIR + velocity estimator + dead-zone for the 8 relative error channels.

    Measurements are the 4 relative position channels; velocities are derived.
    """

    def __init__(self, zeta=0.1, window=30, dt=0.002, thresholds=None):
        self.iir = IirFilter(zeta)
        self.vel = VelocityEstimator(window, dt)
        self.thresholds = np.zeros(8) if thresholds is None else np.asarray(thresholds, float)

    def step(self, measured_pos):
        pos = self.iir.step(measured_pos)
        return np.concatenate([pos, self.vel.step(pos)])

    def transform(self, matrix) -> None:
        self.iir.transform(matrix)
        self.vel.transform(matrix)

    def touchdown(self, landing) -> None:
        """Carry the filter through a foot exchange (see ``reanchor``).

        Stored differences keep only the pelvis part since the new stance foot has stopped.
        """
        if self.iir.state is not None:
            self.iir.state = reanchor(self.iir.state, landing)
        if self.vel.prev is not None:
            self.vel.prev = reanchor(self.vel.prev, landing)
        self.vel.diffs = deque((np.concatenate([np.zeros(2), d[2:]]) for d in self.vel.diffs),
                               maxlen=self.vel.window)

    def suppress(self, e):
        return dead_zone(e, self.thresholds)
