"""Unmapped payload flows whose total volume balances the epoch's TM."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dist import StepDistribution
from .tm import TrafficMatrix

log = logging.getLogger(__name__)


class FlowsetError(RuntimeError):
    def __init__(self, message: str, best: "FlowsetResult | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class UnmappedFlow:
    start_time: float
    size: float


@dataclass(frozen=True, eq=False)
class FlowsetResult:
    start_times: np.ndarray
    sizes: np.ndarray
    s_F: float
    s_M: float
    iat_scale: float
    attempts: int

    @property
    def epsilon(self) -> float:
        return self.s_M / self.s_F if self.s_F > 0 else float("inf")

    @property
    def flows(self) -> list[UnmappedFlow]:
        return [UnmappedFlow(t, s) for t, s in zip(self.start_times.tolist(), self.sizes.tolist())]

    def __len__(self):
        return self.sizes.size


def arrival_times(iat: StepDistribution, scale: float, epoch_length: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Renewal process on ``[0, epoch_length)``; the first arrival is one gap after 0."""
    mean = iat.mean() * scale
    if not mean > 0:
        raise ValueError("inter-arrival distribution has zero mean")
    chunk = int(epoch_length / mean * 1.05) + 64
    parts, t = [], 0.0
    while True:
        gaps = iat.sample(rng, chunk) * scale
        times = t + np.cumsum(gaps)
        parts.append(times)
        t = float(times[-1])
        if t >= epoch_length:
            break
        chunk = int((epoch_length - t) / mean * 1.1) + 64
    times = np.concatenate(parts)
    return times[:np.searchsorted(times, epoch_length, side="left")]


def create_flowset(tm: TrafficMatrix, s_pl: StepDistribution, iat: StepDistribution,
                   rng: np.random.Generator, tolerance: float = 0.01,
                   max_attempts: int = 50, iat_scale: float = 1.0) -> FlowsetResult:
    """Draw arrivals and sizes until their byte total is within ``tolerance`` of the TM's.

    Each failed attempt multiplies the inter-arrival scale by ``s_F / s_M``
    and regenerates both arrivals and sizes.
    """
    s_m = tm.total
    if not s_m > 0:
        raise ValueError("traffic matrix carries no bytes")
    best = None
    scale = iat_scale
    for attempt in range(1, max_attempts + 1):
        times = arrival_times(iat, scale, tm.epoch_length, rng)
        sizes = np.maximum(np.round(s_pl.sample(rng, times.size)), 1.0)
        s_f = float(sizes.sum())
        res = FlowsetResult(times, sizes, s_f, s_m, scale, attempt)
        if best is None or abs(res.epsilon - 1) < abs(best.epsilon - 1):
            best = res
        if abs(res.epsilon - 1) <= tolerance:
            return res
        log.debug("attempt %d: epsilon=%.4f, iat_scale=%.4g", attempt, res.epsilon, scale)
        scale *= (s_f / s_m) if s_f > 0 else 0.5
    raise FlowsetError(f"volume balance not reached in {max_attempts} attempts "
                       f"(best epsilon {best.epsilon:.4f})", best)
