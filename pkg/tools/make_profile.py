"""Regenerate the bundled traffic profile.

The published measurements are only available as plots, so the bundled
profile is synthesized: payload-level ground truth is drawn from simple
mixtures tuned to the summary statistics reported for production data
centers (11 % / 0.5 % pair communication probability per 10 s, ~12.6 MB /
12.4 MB mean non-zero intra/inter TM entry, ~140 kB mean flow size, most
flows below 10 kB, ~100 flow arrivals per ms), then pushed through the
TCP ACK model to obtain the Layer-2 CDFs a measurement study would report.
Flow sizes are cut out of sampled TM entries, so no flow is larger than
the entry of the pair that carries it.
The CDFs are written unshifted (smallest flow 66 bytes); the +219 / +1000
byte evaluation shifts are applied at load time.

    python tools/make_profile.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from dcflowgen.deconvolver import AckModel
from dcflowgen.dist import StepDistribution, empirical_cdf, write_distribution_csv
from dcflowgen.payload import ack_flow_size

SEED = 20141126
N_SAMPLES = 4_000_000
N_ENTRIES = 60_000
MODEL = AckModel()


def log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def truncated_lognormal(rng, median, sigma, hi, size):
    out = rng.lognormal(np.log(median), sigma, size)
    bad = out > hi
    while bad.any():
        out[bad] = rng.lognormal(np.log(median), sigma, bad.sum())
        bad = out > hi
    return out


def mixture(rng, size, parts):
    weights = np.array([w for w, _ in parts])
    which = rng.choice(len(parts), size=size, p=weights / weights.sum())
    out = np.empty(size)
    for k, (_, draw) in enumerate(parts):
        idx = np.flatnonzero(which == k)
        out[idx] = draw(idx.size)
    return out


def digitize(samples, lo, hi, per_decade, extra=(), kind="bytes"):
    """Linear-interpolation CDF sampled at log-spaced values."""
    samples = np.sort(samples)
    grid = np.geomspace(lo, hi, int(round(np.log10(hi / lo) * per_decade)) + 1)
    grid = np.union1d(grid, np.asarray(extra, dtype=float))
    grid = grid[(grid >= samples[0]) & (grid <= samples[-1])]
    grid = np.union1d(grid, [samples[0], samples[-1]])
    cum = np.searchsorted(samples, grid, side="right") / samples.size
    cum[-1] = 1.0
    # keep only the ends of flat runs so cum_prob is as strict as the shape allows
    keep = np.ones(grid.size, bool)
    keep[1:-1] = ~((cum[1:-1] == cum[:-2]) & (cum[1:-1] == cum[2:]))
    return StepDistribution(grid[keep], cum[keep], kind, "linear")


def count_pmf(probs):
    probs = np.asarray(probs, float)
    d = np.flatnonzero(probs > 0)
    return StepDistribution.from_pmf(d, probs[d], support_kind="count")


def rack_degrees(rng, racks, m, sigma=1.0, scale=1.35, p_hub=0.06, hub=8.0):
    """Node degrees of Chung-Lu random graphs with log-normal affinities.

    A few hub servers (``p_hub``) get ``hub`` times the affinity; edge
    ``(i, j)`` is present with probability ``min(1, w_i w_j / sum(w))``.
    """
    out = []
    for _ in range(racks):
        w = rng.lognormal(0.0, sigma, m) * scale
        w[rng.random(m) < p_hub] *= hub
        p = np.minimum(1.0, np.outer(w, w) / w.sum())
        adj = np.triu(rng.random((m, m)) < p, 1)
        out.append((adj | adj.T).sum(axis=1))
    return np.concatenate(out)


def base_flow_sizes(rng, size):
    return mixture(rng, size, [
        (0.40, lambda k: log_uniform(rng, 100, 1e4, k)),
        (0.35, lambda k: truncated_lognormal(rng, 3e4, 1.6, 1e9, k)),
        (0.25, lambda k: 1e5 * (1 - rng.random(k) * (1 - 1e5 / 1e9)) ** -1.0),
    ]).clip(100, None)


def split_entries(rng, entries):
    """Cut a stream of flow sizes at the TM-entry boundaries.

    Flows are laid end to end and every entry boundary splits the flow
    that straddles it, so each flow belongs to exactly one pair and no flow
    is larger than its pair's entry.
    """
    bounds = np.cumsum(entries)
    parts, total = [], 0.0
    while total < bounds[-1]:
        draw = base_flow_sizes(rng, 2_000_000)
        parts.append(draw)
        total += draw.sum()
    starts = np.cumsum(np.concatenate(parts))
    cuts = np.union1d(bounds, starts[starts < bounds[-1]])
    # slivers left by a cut are padded to a minimal flow
    return np.maximum(np.round(np.diff(cuts, prepend=0.0)), 100.0)


def tm_entries(rng, size, small_weight, median, sigma):
    return mixture(rng, size, [
        (small_weight, lambda k: log_uniform(rng, 500, 1e5, k)),
        (1 - small_weight, lambda k: truncated_lognormal(rng, median, sigma, 5e8, k)),
    ])


def build(outdir: Path):
    rng = np.random.default_rng(SEED)
    outdir.mkdir(parents=True, exist_ok=True)
    beta = MODEL.beta

    # intra-rack partners: degrees of simulated racks, so the target is graphical
    intra = rack_degrees(np.random.default_rng([SEED, 1]), 20000, 20)
    intra = np.bincount(intra, minlength=20) / intra.size
    write_distribution_csv(count_pmf(intra), outdir / "n_intra.csv",
                           "intra-rack communication partners per server and 10 s")

    d = np.arange(0, 301)
    inter = np.exp(-0.5 * ((np.log(np.maximum(d, 0.5)) - np.log(5.0)) / 1.1) ** 2) / np.maximum(d, 1)
    inter[0] = 0.0
    inter = 0.75 * inter / inter.sum()
    inter[0] = 0.25
    write_distribution_csv(count_pmf(inter), outdir / "n_inter.csv",
                           "inter-rack communication partners per server and 10 s")

    entries = []
    for name, small, median, sigma, label, share in (
            ("b_intra", 0.45, 1.37e7, 1.0, "intra-rack", 0.24),
            ("b_inter", 0.40, 9.1e6, 1.3, "inter-rack", 0.76)):
        x = tm_entries(rng, N_SAMPLES, small, median, sigma)
        y = tm_entries(rng, N_SAMPLES, small, median, sigma)
        z = x + beta * y
        write_distribution_csv(digitize(z, z.min(), z.max(), 60), outdir / f"{name}.csv",
                               f"non-zero {label} Layer-2 TM entry size in bytes per 10 s")
        entries.append(x[:int(share * N_ENTRIES)])

    # flows are carved out of payload TM entries so sizes and volumes agree
    pl = split_entries(rng, rng.permutation(np.concatenate(entries)))
    ack = ack_flow_size(pl, MODEL)
    flows = np.concatenate([pl, ack[ack > 0]])
    lattice = MODEL.ack_packet_size * np.arange(1, 65)
    write_distribution_csv(digitize(flows, 66, flows.max(), 60, extra=lattice),
                           outdir / "s_flow.csv", "Layer-2 flow size in bytes")

    iat = mixture(rng, N_SAMPLES, [
        (0.50, lambda k: log_uniform(rng, 1e-6, 6e-6, k)),
        (0.40, lambda k: log_uniform(rng, 6e-6, 2e-5, k)),
        (0.10, lambda k: log_uniform(rng, 2e-5, 6e-5, k)),
    ])
    write_distribution_csv(digitize(iat, iat.min(), iat.max(), 40, kind="seconds"), outdir / "iat.csv",
                           "flow inter-arrival time in seconds")
    return {"flows": empirical_cdf(flows), "pl": pl}


if __name__ == "__main__":
    here = Path(__file__).resolve().parents[1]
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else here / "src/dcflowgen/data/profile"
    build(out)
    print(f"wrote profile to {out}")
