"""Per-epoch payload traffic matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deconvolver import AckModel
from .degseq import (AdjacencyGraph, DegreeSequence, RackLayout, solve_inter_rack,
                     solve_intra_rack)
from .dist import StepDistribution

DIRECTIONS = ("both", "one")


@dataclass(frozen=True, eq=False)
class TrafficMatrix:
    """Sparse directed byte totals; ``pairs[k] = (src, dst)``, sorted."""

    layout: RackLayout
    pairs: np.ndarray
    volumes: np.ndarray
    epoch_length: float = 10.0

    def __post_init__(self):
        p = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        v = np.array(self.volumes, dtype=np.float64).ravel()
        if p.shape[0] != v.size:
            raise ValueError("pairs and volumes differ in length")
        if v.size:
            if np.any(v < 0):
                raise ValueError("negative TM entry")
            if np.any(p[:, 0] == p[:, 1]):
                raise ValueError("diagonal TM entry")
            if p.min() < 0 or p.max() >= self.layout.n:
                raise ValueError("node id out of range")
            order = np.lexsort((p[:, 1], p[:, 0]))
            p, v = p[order], v[order]
            if np.any(np.all(p[1:] == p[:-1], axis=1)):
                raise ValueError("duplicate TM entry")
        object.__setattr__(self, "pairs", p)
        object.__setattr__(self, "volumes", v)

    @classmethod
    def empty(cls, layout: RackLayout, epoch_length: float = 10.0) -> "TrafficMatrix":
        return cls(layout, np.empty((0, 2), np.int64), np.empty(0), epoch_length)

    @classmethod
    def from_dense(cls, dense, layout: RackLayout | None = None,
                   epoch_length: float = 10.0) -> "TrafficMatrix":
        a = np.asarray(dense, dtype=np.float64)
        layout = layout or RackLayout(a.shape[0], a.shape[0])
        i, j = np.nonzero(a)
        return cls(layout, np.column_stack((i, j)), a[i, j], epoch_length)

    @classmethod
    def accumulate(cls, layout: RackLayout, src, dst, volumes,
                   epoch_length: float = 10.0) -> "TrafficMatrix":
        """Sum ``volumes`` per ``(src, dst)``; zero sums are dropped."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        key = src * layout.n + dst
        uniq, inv = np.unique(key, return_inverse=True)
        tot = np.bincount(inv, weights=np.asarray(volumes, dtype=np.float64), minlength=uniq.size)
        keep = tot > 0
        pairs = np.column_stack((uniq[keep] // layout.n, uniq[keep] % layout.n))
        return cls(layout, pairs, tot[keep], epoch_length)

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.volumes))

    @property
    def total(self) -> float:
        return float(self.volumes.sum())

    def is_intra(self) -> np.ndarray:
        return self.layout.same_rack(self.pairs[:, 0], self.pairs[:, 1])

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.pairs[:, 0], self.pairs[:, 1]] = self.volumes
        return out

    def get(self, src: int, dst: int) -> float:
        key = self.pairs[:, 0] * self.n + self.pairs[:, 1]
        k = np.searchsorted(key, src * self.n + dst)
        return float(self.volumes[k]) if k < key.size and key[k] == src * self.n + dst else 0.0

    def scaled(self, factor: float) -> "TrafficMatrix":
        return TrafficMatrix(self.layout, self.pairs, self.volumes * factor, self.epoch_length)

    def nonzero(self) -> "TrafficMatrix":
        keep = self.volumes > 0
        return TrafficMatrix(self.layout, self.pairs[keep], self.volumes[keep], self.epoch_length)

    def undirected_degrees(self, kind: str | None = None) -> np.ndarray:
        """Distinct partners per node over non-zero entries (either direction)."""
        nz = self.nonzero()
        a, b = nz.pairs[:, 0], nz.pairs[:, 1]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = np.unique(lo * self.n + hi)
        lo, hi = key // self.n, key % self.n
        if kind is not None:
            same = self.layout.same_rack(lo, hi)
            sel = same if kind == "intra" else ~same
            lo, hi = lo[sel], hi[sel]
        return np.bincount(np.concatenate((lo, hi)), minlength=self.n)

    def pair_fractions(self) -> tuple[float, float]:
        """Fractions of same-rack and cross-rack unordered pairs that carry traffic."""
        intra = self.undirected_degrees("intra").sum() / 2
        inter = self.undirected_degrees("inter").sum() / 2
        ni, ne = self.layout.intra_pair_count(), self.layout.inter_pair_count()
        return (intra / ni if ni else 0.0, inter / ne if ne else 0.0)


@dataclass(frozen=True)
class TrafficProfile:
    """The six generation inputs.

    Depending on the stage, ``b_*`` and ``s_flow`` hold either the observed
    Layer-2 distributions or their payload-level counterparts.
    """

    n_intra: StepDistribution
    n_inter: StepDistribution
    b_intra: StepDistribution
    b_inter: StepDistribution
    s_flow: StepDistribution
    iat: StepDistribution
    model: AckModel = field(default_factory=AckModel)

    def replace(self, **kw) -> "TrafficProfile":
        from dataclasses import replace
        return replace(self, **kw)


def _sample_counts(dist: StepDistribution, rng, size) -> np.ndarray:
    return np.floor(dist.sample(rng, size)).astype(np.int64)


def sample_degrees(profile: TrafficProfile, layout: RackLayout,
                   rng: np.random.Generator) -> tuple[DegreeSequence, DegreeSequence]:
    """Per-node intra and inter partner counts, clipped to what the layout allows."""
    rack = layout.rack_of(np.arange(layout.n))
    sizes = np.bincount(rack)[rack]
    intra = np.clip(_sample_counts(profile.n_intra, rng, layout.n), 0, sizes - 1)
    inter = np.clip(_sample_counts(profile.n_inter, rng, layout.n), 0, layout.n - sizes)
    return DegreeSequence(intra, "intra"), DegreeSequence(inter, "inter")


def build_graph(profile: TrafficProfile, layout: RackLayout, rng: np.random.Generator,
                intra_backend: str = "auto", inter_backend: str = "greedy"):
    """Intra and inter communication graphs on global node ids."""
    d_int, d_ext = sample_degrees(profile, layout, rng)
    intra_edges = []
    for r in range(layout.k):
        nodes = layout.rack_nodes(r)
        if len(nodes) < 2 or not d_int.degrees[nodes.start:nodes.stop].any():
            continue
        rep = solve_intra_rack(d_int.degrees[nodes.start:nodes.stop], profile.n_intra,
                               backend=intra_backend)
        intra_edges.append(rep.graph.edges + nodes.start)
    g_int = AdjacencyGraph(layout.n, np.concatenate(intra_edges) if intra_edges
                           else np.empty((0, 2), np.int64))
    g_ext = solve_inter_rack(d_ext, layout, backend=inter_backend)
    return g_int, g_ext, d_int, d_ext


def build_tm(profile: TrafficProfile, layout: RackLayout, rng: np.random.Generator,
             directions: str = "both", epoch_length: float = 10.0,
             intra_backend: str = "auto", inter_backend: str = "greedy") -> TrafficMatrix:
    """Sample a payload TM for one epoch.

    ``directions="both"`` gives every undirected edge two independently
    drawn directed entries; ``"one"`` puts a single entry on a uniformly
    chosen direction.
    """
    if directions not in DIRECTIONS:
        raise ValueError(f"directions must be one of {DIRECTIONS}")
    g_int, g_ext, _, _ = build_graph(profile, layout, rng, intra_backend, inter_backend)
    pairs, vols = [], []
    for g, dist in ((g_int, profile.b_intra), (g_ext, profile.b_inter)):
        e = g.edges
        if not len(e):
            continue
        if directions == "both":
            p = np.concatenate((e, e[:, ::-1]))
        else:
            flip = rng.random(len(e)) < 0.5
            p = np.where(flip[:, None], e[:, ::-1], e)
        pairs.append(p)
        vols.append(np.maximum(np.round(dist.sample(rng, len(p))), 1.0))
    if not pairs:
        return TrafficMatrix.empty(layout, epoch_length)
    return TrafficMatrix(layout, np.concatenate(pairs), np.concatenate(vols), epoch_length)


def write_tm_csv(tm: TrafficMatrix, path, seed: int | None = None,
                 epoch: int | None = None) -> Path:
    """``src,dst,bytes`` rows plus a JSON sidecar next to it."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("src,dst,bytes\n")
        for (s, d), v in zip(tm.pairs.tolist(), tm.volumes.tolist()):
            fh.write(f"{s},{d},{v!r}\n")
    side = {"n": tm.layout.n, "m": tm.layout.m, "k": tm.layout.k,
            "epoch_length": tm.epoch_length, "seed": seed, "epoch": epoch,
            "entries": tm.nnz, "total_bytes": tm.total}
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def read_tm_csv(path) -> TrafficMatrix:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    layout = RackLayout(int(side["n"]), int(side["m"]))
    if data.size == 0:
        return TrafficMatrix.empty(layout, side["epoch_length"])
    return TrafficMatrix(layout, data[:, :2].astype(np.int64), data[:, 2], side["epoch_length"])
