"""Analytic Layer-2 reconstruction of a schedule and comparison with the inputs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .deconvolver import AckModel
from .degseq import RackLayout
from .dist import ComparisonReport, StepDistribution, compare, empirical_cdf, ks_distance
from .mapper import MappingResult
from .payload import ack_flow_size
from .tm import TrafficMatrix, TrafficProfile

COMPARISONS = ("b_intra", "b_inter", "n_intra", "n_inter", "s_flow", "iat")
# generated inter-arrivals are known not to reproduce the observed ones
EXPECTED_MISMATCH = ("iat",)
# KS is also reported above these thresholds (below them mismatch is expected)
RESTRICT_ABOVE = {"b_intra": 1e4, "b_inter": 1e4, "s_flow": 1000.0}


@dataclass(frozen=True)
class L2Model:
    ack_model: AckModel = field(default_factory=AckModel)
    handshake_overhead: float = 272.0
    per_packet_header: float = 66.0
    ack_handshake_overhead: float = 0.0

    def __post_init__(self):
        if self.handshake_overhead < 0 or self.ack_handshake_overhead < 0:
            raise ValueError("overheads must be non-negative")
        if self.per_packet_header < 0:
            raise ValueError("per_packet_header must be non-negative")


def l2_flow_sizes(payload, model: L2Model = L2Model()) -> tuple[np.ndarray, np.ndarray]:
    """Layer-2 bytes of each payload flow and of its ACK flow."""
    if isinstance(payload, MappingResult):
        payload = payload.sizes
    p = np.asarray(payload, dtype=np.float64)
    mss = model.ack_model.mss
    data = model.handshake_overhead + p + np.ceil(p / mss) * model.per_packet_header
    ack = np.asarray(ack_flow_size(p, model.ack_model), dtype=np.float64)
    ack = np.where(ack > 0, ack + model.ack_handshake_overhead, 0.0)
    return data, ack


def synthesize_l2_tm(schedule: MappingResult, model: L2Model, layout: RackLayout,
                     epoch_length: float = 10.0) -> TrafficMatrix:
    """Per-pair Layer-2 bytes: payload flows forward, their ACK flows backward."""
    if len(schedule) == 0:
        return TrafficMatrix.empty(layout, epoch_length)
    data, ack = l2_flow_sizes(schedule.sizes, model)
    src = np.concatenate((schedule.src, schedule.dst))
    dst = np.concatenate((schedule.dst, schedule.src))
    return TrafficMatrix.accumulate(layout, src, dst, np.concatenate((data, ack)), epoch_length)


@dataclass
class ValidationReport:
    comparisons: dict[str, ComparisonReport]
    ks_restricted: dict[str, float]
    epochs: int
    flows: int
    expected_mismatch: tuple[str, ...] = EXPECTED_MISMATCH

    def ks(self, name: str) -> float:
        return self.comparisons[name].ks_sup_distance

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "flows": self.flows,
            "expected_mismatch": list(self.expected_mismatch),
            "ks_restricted": {k: v for k, v in sorted(self.ks_restricted.items())},
            "restrict_above": RESTRICT_ABOVE,
            "comparisons": {k: self.comparisons[k].to_dict() for k in COMPARISONS
                            if k in self.comparisons},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationReport":
        return cls({k: ComparisonReport.from_dict(v) for k, v in d["comparisons"].items()},
                   dict(d["ks_restricted"]), int(d["epochs"]), int(d["flows"]),
                   tuple(d.get("expected_mismatch", EXPECTED_MISMATCH)))


def generated_distributions(epochs: list[MappingResult], layout: RackLayout,
                            model: L2Model = L2Model(),
                            epoch_length: float = 10.0) -> dict[str, StepDistribution]:
    """The six Layer-2 statistics of a schedule, pooled over epochs."""
    n_int, n_ext, b_int, b_ext, sizes, gaps = [], [], [], [], [], []
    for sched in epochs:
        tm = synthesize_l2_tm(sched, model, layout, epoch_length)
        n_int.append(tm.undirected_degrees("intra"))
        n_ext.append(tm.undirected_degrees("inter"))
        intra = tm.is_intra()
        b_int.append(tm.volumes[intra & (tm.volumes > 0)])
        b_ext.append(tm.volumes[~intra & (tm.volumes > 0)])
        data, ack = l2_flow_sizes(sched.sizes, model)
        sizes.extend((data, ack[ack > 0]))
        # an ACK flow starts together with its payload flow
        starts = np.sort(np.concatenate((sched.start_times, sched.start_times[ack > 0])))
        gaps.append(np.diff(starts))
    cat = np.concatenate
    out = {
        "n_intra": empirical_cdf(cat(n_int), "count"),
        "n_inter": empirical_cdf(cat(n_ext), "count"),
        "s_flow": empirical_cdf(cat(sizes), "bytes"),
    }
    for name, vals in (("b_intra", b_int), ("b_inter", b_ext)):
        v = cat(vals) if vals else np.empty(0)
        if v.size:
            out[name] = empirical_cdf(v, "bytes")
    g = cat(gaps) if gaps else np.empty(0)
    if g.size:
        out["iat"] = empirical_cdf(g, "seconds")
    return out


def validate(epochs: list[MappingResult], observed: TrafficProfile, layout: RackLayout,
             model: L2Model = L2Model(), epoch_length: float = 10.0,
             n_points: int = 200) -> ValidationReport:
    """Compare the schedule's Layer-2 statistics with the observed inputs."""
    if not epochs:
        raise ValueError("need at least one epoch")
    gen = generated_distributions(epochs, layout, model, epoch_length)
    obs = {"n_intra": observed.n_intra, "n_inter": observed.n_inter,
           "b_intra": observed.b_intra, "b_inter": observed.b_inter,
           "s_flow": observed.s_flow, "iat": observed.iat}
    comps, restricted = {}, {}
    for name in COMPARISONS:
        if name not in gen:
            # nothing generated (e.g. no cross-rack pairs): maximal distance
            comps[name] = ComparisonReport(2 * math.log(2), 1.0, [], [])
            if name in RESTRICT_ABOVE:
                restricted[name] = 1.0
            continue
        comps[name] = compare(gen[name], obs[name], n_points=n_points)
        if name in RESTRICT_ABOVE:
            t = RESTRICT_ABOVE[name]
            restricted[name] = ks_distance(gen[name], obs[name], above=t)
    return ValidationReport(comps, restricted, len(epochs), int(sum(len(e) for e in epochs)))


def flagged_mismatch(report: ValidationReport, name: str = "iat", tol: float = 0.0) -> bool:
    """True when an expected-mismatch comparison is present and does not match exactly."""
    c = report.comparisons.get(name)
    return c is not None and not math.isnan(c.ks_sup_distance) and c.ks_sup_distance > tol
