"""Realized-volatility signature curves from mid-price paths.

The signature of a path is its realized variance as a function of the
sampling interval. Previous-tick (last observation carried forward) sampling
on the grid 0, delta, 2*delta, ...; squared increments are summed and
normalized per second so curves are comparable across horizons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GatedHawkesError
from .simulate import MidPricePath

#: Default sampling grid: logarithmic, 0.1 s to 600 s, 25 points.
DEFAULT_DELTAS = tuple(np.geomspace(0.1, 600.0, 25))


@dataclass(frozen=True, eq=False)
class SignatureCurve:
    deltas: np.ndarray   # ascending sampling intervals, seconds
    rv: np.ndarray       # mean realized variance per interval, ticks^2/s
    stderr: np.ndarray   # standard error across paths (0 for a single path)
    n_paths: int

    def __eq__(self, other):
        if not isinstance(other, SignatureCurve):
            return NotImplemented
        return (self.n_paths == other.n_paths
                and np.array_equal(self.deltas, other.deltas)
                and np.array_equal(self.rv, other.rv)
                and np.array_equal(self.stderr, other.stderr))


def realized_variance(path: MidPricePath, delta: float, horizon: float) -> float:
    """Sum of squared previous-tick increments at spacing delta, per second.

    Samples at t = 0, delta, ..., m*delta with m = floor(horizon/delta);
    nothing beyond the horizon is read.
    """
    if delta <= 0:
        raise GatedHawkesError(f"delta must be positive, got {delta}")
    if horizon < delta:
        raise GatedHawkesError(
            f"horizon {horizon} shorter than sampling interval {delta}")
    m = int(np.floor(horizon / delta + 1e-12))
    grid = np.arange(m + 1) * delta
    sampled = path.price_at(grid)
    increments = np.diff(sampled)
    return float(np.dot(increments, increments) / horizon)


def signature_curve(paths: Sequence[MidPricePath], deltas: Sequence[float],
                    horizon: float) -> SignatureCurve:
    """Per-delta mean realized variance across paths, with standard errors."""
    paths = list(paths)
    if not paths:
        raise GatedHawkesError("signature curve needs at least one path")
    deltas = np.asarray(sorted(float(d) for d in deltas))
    if deltas.size == 0:
        raise GatedHawkesError("signature curve needs at least one delta")
    rv = np.empty((len(paths), deltas.size))
    for i, p in enumerate(paths):
        for j, d in enumerate(deltas):
            rv[i, j] = realized_variance(p, d, horizon)
    mean = rv.mean(axis=0)
    if len(paths) > 1:
        stderr = rv.std(axis=0, ddof=1) / np.sqrt(len(paths))
    else:
        stderr = np.zeros(deltas.size)
    return SignatureCurve(deltas=deltas, rv=mean, stderr=stderr,
                          n_paths=len(paths))
