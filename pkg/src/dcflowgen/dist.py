"""Step-function distributions and the statistics shared by every stage.

A :class:`StepDistribution` is a CDF given by ``(value, cum_prob)`` points.
Between points the CDF is either interpolated linearly (the default for
byte and time valued inputs, which are usually digitized from plots) or
held constant (``interpolation="step"``, used for counts and for every
empirical CDF built from samples).  The first point always carries an atom
of size ``cum_prob[0]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve

SUPPORT_KINDS = ("bytes", "seconds", "count")
INTERPOLATIONS = ("linear", "step")


class DistributionError(ValueError):
    pass


def default_interpolation(support_kind: str) -> str:
    return "step" if support_kind == "count" else "linear"


@dataclass(frozen=True, eq=False)
class StepDistribution:
    values: np.ndarray
    cum_probs: np.ndarray
    support_kind: str = "bytes"
    interpolation: str = "linear"

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        p = np.array(self.cum_probs, dtype=np.float64).ravel()
        if v.shape != p.shape or v.size == 0:
            raise DistributionError("values and cum_probs must be equal-length and non-empty")
        if self.support_kind not in SUPPORT_KINDS:
            raise DistributionError(f"unknown support kind {self.support_kind!r}")
        if self.interpolation not in INTERPOLATIONS:
            raise DistributionError(f"unknown interpolation {self.interpolation!r}")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(p)):
            raise DistributionError("non-finite point")
        if v[0] < 0:
            raise DistributionError("values must be non-negative")
        if np.any(np.diff(v) <= 0):
            raise DistributionError("values must be strictly increasing")
        if np.any(np.diff(p) < -1e-12) or p[0] < -1e-12:
            raise DistributionError("cum_probs must be non-decreasing and non-negative")
        if abs(p[-1] - 1.0) > 1e-9:
            raise DistributionError(f"last cum_prob must be 1, got {p[-1]!r}")
        p = np.clip(np.maximum.accumulate(p), 0.0, 1.0)
        p[-1] = 1.0
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cum_probs", p)

    # -- construction -------------------------------------------------

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]], support_kind="bytes",
                    interpolation=None) -> "StepDistribution":
        """Build from ``(value, cum_prob)`` pairs.

        Repeated values are merged (the largest cum_prob wins), so a
        degenerate CDF may be written as ``[(42, 0.0), (42, 1.0)]``.
        """
        pts = sorted((float(v), float(p)) for v, p in points)
        merged: list[list[float]] = []
        for v, p in pts:
            if merged and merged[-1][0] == v:
                merged[-1][1] = max(merged[-1][1], p)
            else:
                merged.append([v, p])
        arr = np.array(merged)
        if interpolation is None:
            interpolation = default_interpolation(support_kind)
        return cls(arr[:, 0], arr[:, 1], support_kind, interpolation)

    @classmethod
    def point_mass(cls, value: float, support_kind="bytes") -> "StepDistribution":
        return cls(np.array([value]), np.array([1.0]), support_kind, "step")

    @classmethod
    def from_pmf(cls, values, probs, support_kind="bytes") -> "StepDistribution":
        """Atoms at ``values`` with weights ``probs`` (normalized here)."""
        values = np.asarray(values, dtype=np.float64)
        probs = np.asarray(probs, dtype=np.float64)
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order]
        if np.any(probs < 0):
            raise DistributionError("negative probability")
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        total = probs.sum()
        if values.size == 0 or total <= 0:
            raise DistributionError("pmf has no mass")
        uniq, inv = np.unique(values, return_inverse=True)
        mass = np.bincount(inv, weights=probs) / total
        cum = np.cumsum(mass)
        cum[-1] = 1.0
        return cls(uniq, cum, support_kind, "step")

    # -- evaluation ---------------------------------------------------

    def cdf(self, x):
        """Right-continuous CDF evaluated at ``x`` (scalar or array)."""
        x = np.asarray(x, dtype=np.float64)
        v, p = self.values, self.cum_probs
        idx = np.searchsorted(v, x, side="right") - 1
        out = np.where(idx >= 0, p[np.clip(idx, 0, None)], 0.0)
        if self.interpolation == "linear" and v.size > 1:
            inside = (idx >= 0) & (idx < v.size - 1)
            i = np.clip(idx, 0, v.size - 2)
            frac = (x - v[i]) / (v[i + 1] - v[i])
            lin = p[i] + (p[i + 1] - p[i]) * frac
            out = np.where(inside, lin, out)
        return out if out.ndim else float(out)

    def cdf_left(self, x):
        """Left limit ``F(x-)``."""
        x = np.asarray(x, dtype=np.float64)
        v, p = self.values, self.cum_probs
        if self.interpolation == "step":
            idx = np.searchsorted(v, x, side="left") - 1
            out = np.where(idx >= 0, p[np.clip(idx, 0, None)], 0.0)
        else:
            out = np.asarray(self.cdf(x), dtype=np.float64)
            out = np.where(x == v[0], 0.0, out)
        return out if out.ndim else float(out)

    def quantile(self, u):
        """Generalized inverse ``inf{x : F(x) >= u}`` for ``u`` in (0, 1]."""
        u = np.asarray(u, dtype=np.float64)
        v, p = self.values, self.cum_probs
        idx = np.clip(np.searchsorted(p, u, side="left"), 0, v.size - 1)
        out = v[idx]
        if self.interpolation == "linear" and v.size > 1:
            lo = np.clip(idx - 1, 0, None)
            width = p[idx] - p[lo]
            safe = np.where(width > 0, width, 1.0)
            lin = v[lo] + (u - p[lo]) / safe * (v[idx] - v[lo])
            out = np.where((idx > 0) & (width > 0), lin, out)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-transform draws; ``rng`` is consumed, never stored."""
        u = 1.0 - rng.random(size)
        return self.quantile(u)

    def mean(self) -> float:
        v, p = self.values, self.cum_probs
        mass = np.diff(p, prepend=0.0)
        if self.interpolation == "step" or v.size == 1:
            return float(np.dot(v, mass))
        mids = np.concatenate(([v[0]], 0.5 * (v[1:] + v[:-1])))
        return float(np.dot(mids, mass))

    def pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms of a step distribution as ``(values, probs)``."""
        if self.interpolation != "step":
            raise DistributionError("pmf() needs a step distribution")
        return self.values.copy(), np.diff(self.cum_probs, prepend=0.0)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.cum_probs.tolist()))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    # -- transforms ---------------------------------------------------

    def shifted(self, delta: float) -> "StepDistribution":
        return StepDistribution(self.values + delta, self.cum_probs,
                                self.support_kind, self.interpolation)

    def scaled(self, factor: float) -> "StepDistribution":
        if factor <= 0:
            raise DistributionError("scale factor must be positive")
        return StepDistribution(self.values * factor, self.cum_probs,
                                self.support_kind, self.interpolation)

    def with_interpolation(self, interpolation: str) -> "StepDistribution":
        return StepDistribution(self.values, self.cum_probs, self.support_kind, interpolation)

    def truncated_above(self, threshold: float) -> "StepDistribution":
        """Conditional distribution of ``X`` given ``X > threshold``."""
        base = float(self.cdf(threshold))
        if base >= 1.0 - 1e-12:
            raise DistributionError(f"no mass above {threshold}")
        keep = self.values > threshold
        v = self.values[keep]
        p = (self.cum_probs[keep] - base) / (1.0 - base)
        if self.interpolation == "linear" and not keep[0]:
            # the linear piece straddling the threshold restarts from zero
            v = np.concatenate(([threshold], v))
            p = np.concatenate(([0.0], p))
        p[-1] = 1.0
        return StepDistribution(v, np.clip(p, 0.0, 1.0), self.support_kind, self.interpolation)

    def __repr__(self):
        lo, hi = self.support
        return (f"StepDistribution(n={self.values.size}, support=[{lo:g}, {hi:g}], "
                f"kind={self.support_kind}, {self.interpolation})")


# -- empirical estimation ----------------------------------------------


def empirical_cdf(samples: Sequence[float], support_kind="bytes") -> StepDistribution:
    """Right-continuous empirical CDF; ``F(x_i) = rank / n``."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DistributionError("empirical_cdf of an empty sample")
    uniq, counts = np.unique(arr, return_counts=True)
    cum = np.cumsum(counts) / arr.size
    cum[-1] = 1.0
    return StepDistribution(uniq, cum, support_kind, "step")


def sample(dist: StepDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


# -- distances ----------------------------------------------------------


def ks_distance(a: StepDistribution, b: StepDistribution, above: float | None = None) -> float:
    """Exact ``sup |F_a - F_b|``.

    Both CDFs are piecewise linear or constant between the merged
    breakpoints, so the supremum is attained at a breakpoint (as a value or
    a left limit).  With ``above`` the comparison is between the
    conditional distributions on ``(above, inf)``.
    """
    if above is not None:
        a = a.truncated_above(above)
        b = b.truncated_above(above)
    xs = np.union1d(a.values, b.values)
    d_right = np.abs(a.cdf(xs) - b.cdf(xs))
    d_left = np.abs(a.cdf_left(xs) - b.cdf_left(xs))
    return float(min(1.0, max(d_right.max(), d_left.max())))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass(frozen=True)
class ComparisonReport:
    topsoe: float
    ks_sup_distance: float
    qq_points: list[tuple[float, float]] = field(repr=False)
    pp_points: list[tuple[float, float]] = field(repr=False)

    def to_dict(self) -> dict:
        return {"topsoe": self.topsoe, "ks_sup_distance": self.ks_sup_distance,
                "qq_points": [list(p) for p in self.qq_points],
                "pp_points": [list(p) for p in self.pp_points]}

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(float(d["topsoe"]), float(d["ks_sup_distance"]),
                   [tuple(p) for p in d["qq_points"]], [tuple(p) for p in d["pp_points"]])


def _binned_topsoe(a: StepDistribution, b: StepDistribution, bins: int = 256) -> float:
    # both distributions binned on shared quantile-spaced edges of the union
    xs = np.union1d(a.values, b.values)
    if xs.size == 1:
        return 0.0
    edges = np.unique(np.quantile(xs, np.linspace(0, 1, min(bins, xs.size) + 1)))
    pa = np.diff(np.concatenate(([0.0], a.cdf(edges[1:-1]), [1.0])))
    pb = np.diff(np.concatenate(([0.0], b.cdf(edges[1:-1]), [1.0])))
    return topsoe(pa, pb)


def compare(a: StepDistribution, b: StepDistribution, n_points: int = 200,
            above: float | None = None) -> ComparisonReport:
    """QQ/PP data, KS and a binned Topsøe distance between two CDFs."""
    if above is not None:
        a, b = a.truncated_above(above), b.truncated_above(above)
    u = (np.arange(n_points) + 0.5) / n_points
    qa, qb = np.asarray(a.quantile(u)), np.asarray(b.quantile(u))
    qq = list(zip(qa.tolist(), qb.tolist()))
    xs = np.union1d(a.values, b.values)
    if xs.size > n_points:
        xs = xs[np.unique(np.linspace(0, xs.size - 1, n_points).round().astype(int))]
    pa, pb = np.asarray(a.cdf(xs)), np.asarray(b.cdf(xs))
    order = np.lexsort((pb, pa))
    pp = list(zip(pa[order].tolist(), pb[order].tolist()))
    return ComparisonReport(_binned_topsoe(a, b), ks_distance(a, b), qq, pp)


def topsoe(p, q) -> float:
    """Topsøe distance of two aligned non-negative vectors (normalized here).

    Terms with both entries zero contribute 0, and ``0 * ln(0/x) = 0``.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise DistributionError("shape mismatch")
    if np.any(p < 0) or np.any(q < 0):
        raise DistributionError("negative entry")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise DistributionError("all-zero matrix")
    p, q = p / sp, q / sq
    s = p + q
    out = 0.0
    nz = p > 0
    out += float(np.sum(p[nz] * np.log(2 * p[nz] / s[nz])))
    nz = q > 0
    out += float(np.sum(q[nz] * np.log(2 * q[nz] / s[nz])))
    return max(out, 0.0)


def topsoe_distance(m, m_prime) -> float:
    """Topsøe distance between two traffic matrices.

    Accepts dense 2-D arrays or sparse matrices exposing ``pairs`` (k x 2)
    and ``volumes`` (k,); sparse inputs are aligned on the union of pairs.
    """
    if hasattr(m, "pairs") and hasattr(m_prime, "pairs"):
        if getattr(m, "n", None) != getattr(m_prime, "n", None):
            raise DistributionError("traffic matrices differ in size")
        n = max(int(m.n), 1)
        ka = m.pairs[:, 0].astype(np.int64) * n + m.pairs[:, 1]
        kb = m_prime.pairs[:, 0].astype(np.int64) * n + m_prime.pairs[:, 1]
        keys = np.union1d(ka, kb)
        va = np.zeros(keys.size)
        vb = np.zeros(keys.size)
        va[np.searchsorted(keys, ka)] = m.volumes
        vb[np.searchsorted(keys, kb)] = m_prime.volumes
        return topsoe(va, vb)
    a, b = np.asarray(m, dtype=np.float64), np.asarray(m_prime, dtype=np.float64)
    if a.shape != b.shape:
        raise DistributionError("traffic matrices differ in shape")
    return topsoe(a, b)


# -- uniform grids -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Masses at ``origin + i * bin_width``."""

    origin: float
    bin_width: float
    masses: np.ndarray

    def __post_init__(self):
        if not self.bin_width > 0:
            raise DistributionError("bin_width must be positive")
        m = np.array(self.masses, dtype=np.float64).ravel()
        object.__setattr__(self, "masses", m)

    @property
    def size(self) -> int:
        return self.masses.size

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.size)

    def normalized(self) -> "DensityGrid":
        m = np.clip(self.masses, 0.0, None)
        total = m.sum()
        if total <= 0:
            raise DistributionError("grid has no mass")
        return DensityGrid(self.origin, self.bin_width, m / total)

    def mean(self) -> float:
        return float(np.dot(self.centers, self.masses) / self.masses.sum())

    @classmethod
    def from_distribution(cls, dist: StepDistribution, bin_width: float, size: int,
                          origin: float = 0.0) -> "DensityGrid":
        """Cell ``i`` collects the mass in ``(c_i - h/2, c_i + h/2]``."""
        edges = origin + bin_width * (np.arange(size + 1) - 0.5)
        cum = np.asarray(dist.cdf(edges))
        cum[-1] = 1.0
        masses = np.diff(cum)
        masses[0] += cum[0]
        return cls(origin, bin_width, np.clip(masses, 0.0, None))

    def to_distribution(self, support_kind="bytes") -> StepDistribution:
        """Linear CDF spreading each cell's mass over its width."""
        m = np.clip(self.masses, 0.0, None)
        total = m.sum()
        if total <= 0:
            raise DistributionError("grid has no mass")
        nz = np.flatnonzero(m > 0)
        lo, hi = nz[0], nz[-1]
        cum = np.cumsum(m[lo:hi + 1]) / total
        right = self.origin + self.bin_width * (np.arange(lo, hi + 1) + 0.5)
        left = max(0.0, self.origin + self.bin_width * (lo - 0.5))
        values = np.concatenate(([left], right))
        cum = np.concatenate(([0.0], cum))
        cum[-1] = 1.0
        return StepDistribution(values, cum, support_kind, "linear")


def convolve(a: DensityGrid, b: DensityGrid) -> DensityGrid:
    """Distribution of the sum of independent draws from two grids."""
    if not math.isclose(a.bin_width, b.bin_width, rel_tol=1e-12):
        raise DistributionError(f"bin widths differ: {a.bin_width} vs {b.bin_width}")
    if a.size * b.size <= 1 << 16:
        masses = np.convolve(a.masses, b.masses)
    else:
        masses = fftconvolve(a.masses, b.masses)
        masses[np.abs(masses) < 1e-15 * max(1.0, masses.max())] = 0.0
        masses = np.clip(masses, 0.0, None)
    return DensityGrid(a.origin + b.origin, a.bin_width, masses)


# -- CSV format ------------------------------------------------------------


def read_distribution_csv(path, support_kind=None, interpolation=None) -> StepDistribution:
    """Read a ``value,cum_prob`` CSV.

    ``# support_kind: ...`` and ``# interpolation: ...`` comment lines are
    honoured unless overridden by the arguments.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_distribution_csv(text, support_kind, interpolation, source=str(path))


def parse_distribution_csv(text: str, support_kind=None, interpolation=None,
                           source="<string>") -> StepDistribution:
    meta: dict[str, str] = {}
    points: list[tuple[float, float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip()
            if ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip().lower()] = val.strip()
            continue
        row = next(csv.reader([s]))
        if len(row) != 2:
            raise DistributionError(f"{source}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            points.append((float(row[0]), float(row[1])))
        except ValueError:
            if points or row[0].strip().lower() != "value":
                raise DistributionError(f"{source}:{lineno}: not a number: {s!r}") from None
    if not points:
        raise DistributionError(f"{source}: no data rows")
    kind = support_kind or meta.get("support_kind", "bytes")
    interp = interpolation or meta.get("interpolation") or default_interpolation(kind)
    v = np.array([p[0] for p in points])
    c = np.array([p[1] for p in points])
    try:
        return StepDistribution(v, c, kind, interp)
    except DistributionError as exc:
        raise DistributionError(f"{source}: {exc}") from None


def format_distribution_csv(dist: StepDistribution, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write(f"# support_kind: {dist.support_kind}\n")
    buf.write(f"# interpolation: {dist.interpolation}\n")
    buf.write("value,cum_prob\n")
    for v, p in zip(dist.values, dist.cum_probs):
        buf.write(f"{float(v)!r},{float(p)!r}\n")
    return buf.getvalue()


def write_distribution_csv(dist: StepDistribution, path, comment: str | None = None) -> None:
    Path(path).write_text(format_distribution_csv(dist, comment), encoding="utf-8")
