"""Payload flow-size extraction: remove implied ACK flows from Layer-2 flow sizes."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .deconvolver import AckModel
from .dist import DistributionError, StepDistribution

log = logging.getLogger(__name__)


def ack_flow_size(payload, model: AckModel = AckModel()):
    """Bytes of the ACK flow acknowledging ``payload`` bytes.

    ``ack_packet_size * ceil(payload / (mss * r))``; works on scalars and
    arrays.  A zero-byte payload has no ACK flow.
    """
    p = np.asarray(payload, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("payload must be non-negative")
    out = model.ack_packet_size * np.ceil(p / model.bytes_per_ack)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class FlowSizePMF:
    sizes: np.ndarray
    probs: np.ndarray
    model: AckModel = field(default_factory=AckModel)

    def __post_init__(self):
        s = np.array(self.sizes, dtype=np.float64).ravel()
        p = np.array(self.probs, dtype=np.float64).ravel()
        if s.size == 0:
            raise DistributionError("empty flow-size pmf")
        if s.shape != p.shape:
            raise DistributionError("sizes and probs differ in length")
        if np.any(np.diff(s) <= 0):
            raise DistributionError("sizes must be strictly increasing")
        if np.any(p < 0):
            raise DistributionError("negative probability")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DistributionError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "sizes", s)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_mapping(cls, masses: dict, model: AckModel = AckModel()) -> "FlowSizePMF":
        items = sorted((float(k), float(v)) for k, v in masses.items())
        sizes = np.array([k for k, _ in items])
        probs = np.array([v for _, v in items])
        return cls(sizes, probs / probs.sum(), model)

    @classmethod
    def from_distribution(cls, dist: StepDistribution, model: AckModel = AckModel(),
                          per_decade: int = 1000) -> "FlowSizePMF":
        """Discretize a flow-size CDF.

        Step distributions keep their atoms.  Continuous pieces are binned
        into right-closed cells whose mass sits on the right edge; below the
        largest possible ACK flow the cells are exactly the ACK-size lattice
        (multiples of the ACK packet size) so implied ACK flows land on
        existing bins, above it cells are log-spaced.
        """
        if dist.interpolation == "step":
            sizes, probs = dist.pmf()
            keep = probs > 0
            return cls(sizes[keep], probs[keep] / probs[keep].sum(), model)
        lo, hi = dist.support
        unit = model.ack_packet_size
        top = float(ack_flow_size(hi, model))
        lattice = unit * np.arange(1, int(round(top / unit)) + 1)
        upper = np.empty(0)
        if hi > lattice[-1]:
            n = max(2, int(math.ceil(math.log10(hi / lattice[-1]) * per_decade)) + 1)
            upper = np.geomspace(lattice[-1], hi, n)[1:]
        edges = np.concatenate((lattice, upper))
        if edges[-1] < hi:
            edges = np.append(edges, hi)
        cum = np.asarray(dist.cdf(edges))
        cum[-1] = 1.0
        mass = np.diff(cum, prepend=0.0)
        keep = mass > 0
        return cls(edges[keep], mass[keep] / mass[keep].sum(), model)

    def to_distribution(self) -> StepDistribution:
        return StepDistribution.from_pmf(self.sizes, self.probs, "bytes")

    def mean(self) -> float:
        return float(np.dot(self.sizes, self.probs))


def infer_payload_sizes(obs: FlowSizePMF) -> FlowSizePMF:
    """Payload flow-size pmf whose implied ACK flows reproduce ``obs``.

    Sizes are processed largest first; each size's (clamped) payload mass
    is removed from the bin of its ACK flow, creating that bin if needed.
    """
    model = obs.model
    mass = dict(zip(obs.sizes.tolist(), obs.probs.tolist()))
    if not mass:
        raise DistributionError("empty observation")
    heap = [-s for s in mass]
    heapq.heapify(heap)
    read: set[float] = set()
    fixed_points = 0
    while heap:
        x = -heapq.heappop(heap)
        if x in read:
            continue
        read.add(x)
        p = max(mass[x], 0.0)
        mass[x] = p
        if p == 0.0 or x == 0.0:
            continue
        y = float(ack_flow_size(x, model))
        if y == x:
            fixed_points += 1
        elif y in read:
            log.warning("ACK(%g)=%g exceeds the payload; bin already processed", x, y)
        if y not in mass:
            mass[y] = 0.0
            heapq.heappush(heap, -y)
        mass[y] -= p
        if y == x:
            mass[x] = max(mass[x], 0.0)
    if fixed_points:
        log.warning("%d flow size(s) are their own ACK size; their payload mass was removed",
                    fixed_points)
    sizes = np.array(sorted(mass))
    probs = np.clip(np.array([mass[s] for s in sizes]), 0.0, None)
    # cancellation leaves round-off residue in fully consumed ACK bins
    probs[probs < 1e-12 * obs.probs.max()] = 0.0
    total = probs.sum()
    if total <= 0:
        log.warning("no payload mass left after removing ACK flows; returning the input")
        return obs
    keep = probs > 0
    return FlowSizePMF(sizes[keep], probs[keep] / total, model)


def implied_l2_flow_sizes(pl: FlowSizePMF, pl_ack_split: float = 0.5) -> StepDistribution:
    """Layer-2 flow sizes implied by payload flows and their ACK flows.

    A random Layer-2 flow is a payload flow with probability
    ``pl_ack_split`` and otherwise the ACK flow of a payload flow.
    """
    if not 0.0 < pl_ack_split < 1.0:
        raise ValueError("pl_ack_split must lie in (0, 1)")
    acks = np.asarray(ack_flow_size(pl.sizes, pl.model))
    has_ack = acks > 0
    ack_w = pl.probs[has_ack]
    values = np.concatenate((pl.sizes, acks[has_ack]))
    weights = np.concatenate((pl_ack_split * pl.probs,
                              (1 - pl_ack_split) * ack_w / max(ack_w.sum(), 1e-300)))
    return StepDistribution.from_pmf(values, weights, "bytes")
