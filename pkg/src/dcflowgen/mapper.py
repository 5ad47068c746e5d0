"""Assign unmapped flows to node pairs of a traffic matrix.

Two strategies: ``map_random`` treats the (shrinking) TM as a sampling
distribution, ``map_drr`` walks the non-zero pairs like a deficit
round-robin scheduler, granting each visited pair ``max(alpha * R, omega)``
bytes of credit where ``R`` is the pair's remaining volume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dist import topsoe_distance
from .flowset import FlowsetResult
from .tm import TrafficMatrix


@dataclass(frozen=True)
class MappedFlow:
    start_time: float
    src: int
    dst: int
    size: float


@dataclass(frozen=True, eq=False)
class MappingResult:
    """Columnar mapped flows, sorted by start time."""

    start_times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    sizes: np.ndarray

    def __len__(self):
        return self.sizes.size

    @property
    def flows(self) -> list[MappedFlow]:
        return [MappedFlow(*row) for row in zip(self.start_times.tolist(), self.src.tolist(),
                                                self.dst.tolist(), self.sizes.tolist())]

    def realized(self, tm: TrafficMatrix) -> TrafficMatrix:
        return TrafficMatrix.accumulate(tm.layout, self.src, self.dst, self.sizes, tm.epoch_length)


def _columns(flows):
    if isinstance(flows, FlowsetResult):
        return flows.start_times, flows.sizes
    start = np.array([f.start_time for f in flows], dtype=np.float64)
    size = np.array([f.size for f in flows], dtype=np.float64)
    return start, size


def _result(tm: TrafficMatrix, start, size, pair) -> MappingResult:
    order = np.argsort(start, kind="stable")
    p = tm.pairs[pair[order]]
    return MappingResult(start[order], p[:, 0].copy(), p[:, 1].copy(), size[order])


@numba.njit(cache=True)
def _drr_kernel(sizes, residual, alpha, omega, cursor, requeue, advance):
    n_pairs = residual.size
    n = sizes.size
    credit = np.zeros(n_pairs)
    out = np.empty(n, np.int64)
    cap = n + 1
    queue = np.empty(cap, np.int64)
    queue[:n] = np.arange(n)
    head, tail, left = 0, n, n
    steps = 0
    while left > 0:
        f = queue[head]
        s = sizes[f]
        if credit[cursor] >= s:
            head = head + 1 if head + 1 < cap else 0
            out[f] = cursor
            credit[cursor] -= s
            residual[cursor] = max(residual[cursor] - s, 0.0)
            left -= 1
            if not advance:
                continue
        else:
            credit[cursor] += max(alpha * residual[cursor], omega)
            steps += 1
            if requeue:
                head = head + 1 if head + 1 < cap else 0
                queue[tail] = f
                tail = tail + 1 if tail + 1 < cap else 0
        cursor += 1
        if cursor == n_pairs:
            cursor = 0
    return out, steps


# name -> (requeue a flow that does not fit, advance the cursor after an assignment)
_DRR_FLAGS = {
    "rotate": (False, True),
    "requeue-rotate": (True, True),
    "requeue": (True, False),
    "hol": (False, False),
}
DRR_POLICIES = tuple(_DRR_FLAGS)


def map_drr(flows, tm: TrafficMatrix, rng: np.random.Generator, alpha: float = 0.1,
            omega: float = 100.0, policy: str = "requeue-rotate") -> MappingResult:
    """Deficit-round-robin mapping.

    Flows are served from a uniformly random permutation. Each visit of the
    ring cursor either assigns the current flow to the pair under the cursor
    (if its credit covers the flow) or grants that pair credit and advances.
    The cursor persists across flows.

    Policies differ in two details:

    * ``rotate``: after an assignment the cursor moves on, so the
      next flow starts at the next pair. A flow that does not fit stays at
      the head of the queue.
    * ``requeue-rotate`` (default): as ``rotate``, but a flow that does not fit goes
      to the back of the queue.
    * ``requeue``: the cursor stays on a pair after an assignment; flows that
      do not fit are requeued.
    * ``hol``: the cursor stays after an assignment and the head flow waits
      until some pair accepts it. With heavy-tailed sizes a few large flows
      inflate credit all around the ring and the result maps worse than the
      random baseline.

    Keeping the cursor after an assignment lets a pair with accumulated
    credit absorb a run of small flows, which leaves small and mid-sized
    entries under-filled; rotating spreads flows across the ring.
    """
    if alpha <= 0 or omega <= 0:
        raise ValueError("alpha and omega must be positive")
    if policy not in _DRR_FLAGS:
        raise ValueError(f"policy must be one of {DRR_POLICIES}")
    nz = tm.nonzero()
    if nz.nnz == 0:
        raise ValueError("traffic matrix has no non-zero entry")
    start, size = _columns(flows)
    if size.size == 0:
        raise ValueError("no flows to map")
    perm = rng.permutation(size.size)
    requeue, advance = _DRR_FLAGS[policy]
    pair_of_perm, _ = _drr_kernel(size[perm], nz.volumes.copy(), float(alpha), float(omega), 0,
                                  requeue, advance)
    pair = np.empty(size.size, np.int64)
    pair[perm] = pair_of_perm
    return _result(nz, start, size, pair)


@numba.njit(cache=True)
def _fenwick_build(w):
    n = w.size
    tree = np.zeros(n + 1)
    for i in range(n):
        tree[i + 1] += w[i]
        j = i + 1 + ((i + 1) & -(i + 1))
        if j <= n:
            tree[j] += tree[i + 1]
    return tree


@numba.njit(cache=True)
def _fenwick_add(tree, i, delta):
    i += 1
    while i < tree.size:
        tree[i] += delta
        i += i & -i


@numba.njit(cache=True)
def _fenwick_find(tree, target):
    """Smallest index whose prefix sum exceeds ``target``."""
    pos = 0
    step = 1
    while step * 2 < tree.size:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt < tree.size and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    return pos


@numba.njit(cache=True)
def _random_kernel(sizes, volumes, uniforms):
    w = volumes.copy()
    tree = _fenwick_build(w)
    total = w.sum()
    floor = 1e-9 * total
    out = np.empty(sizes.size, np.int64)
    n = w.size
    for f in range(sizes.size):
        if total <= 0.0:
            # everything consumed: fall back to the original proportions
            w[:] = volumes
            tree = _fenwick_build(w)
            total = w.sum()
        k = _fenwick_find(tree, uniforms[f] * total)
        if k >= n:
            k = n - 1
        while w[k] <= 0.0:  # guard against round-off landing on an empty slot
            k = (k + 1) % n
        out[f] = k
        dec = min(w[k], sizes[f])
        w[k] -= dec
        total -= dec
        _fenwick_add(tree, k, -dec)
        if total < floor:
            total = 0.0
    return out


def map_random(flows, tm: TrafficMatrix, rng: np.random.Generator) -> MappingResult:
    """Draw a pair for each flow with probability proportional to its remaining volume.

    The chosen pair's weight drops by the flow size (floored at 0); once
    every weight is exhausted the original entries are used again.
    """
    nz = tm.nonzero()
    if nz.nnz == 0:
        raise ValueError("traffic matrix has no non-zero entry")
    start, size = _columns(flows)
    pair = _random_kernel(size, nz.volumes, rng.random(size.size))
    return _result(nz, start, size, pair)


def mapping_quality(tm: TrafficMatrix, mapped: MappingResult) -> float:
    """Topsøe distance between the TM and the per-pair sums of mapped flows."""
    return topsoe_distance(tm.nonzero(), mapped.realized(tm))
