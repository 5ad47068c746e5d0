"""QQ and PP figures for validation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dist import ComparisonReport  # noqa: E402

TITLES = {
    "b_intra": "intra-rack TM entry bytes",
    "b_inter": "inter-rack TM entry bytes",
    "n_intra": "intra-rack partners per node",
    "n_inter": "inter-rack partners per node",
    "s_flow": "Layer-2 flow size",
    "iat": "flow inter-arrival time",
}
LOG_AXES = {"b_intra", "b_inter", "s_flow", "iat"}


def plot_comparison(comp: ComparisonReport, name: str, path) -> Path:
    fig, (ax_qq, ax_pp) = plt.subplots(1, 2, figsize=(9, 4.2))
    gq, oq = zip(*comp.qq_points) if comp.qq_points else ((), ())
    ax_qq.plot(oq, gq, ".", ms=3)
    lo = min(min(gq, default=1), min(oq, default=1))
    hi = max(max(gq, default=1), max(oq, default=1))
    if name in LOG_AXES and lo > 0:
        ax_qq.set_xscale("log")
        ax_qq.set_yscale("log")
    ax_qq.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax_qq.set_xlabel("observed quantile")
    ax_qq.set_ylabel("generated quantile")
    ax_qq.set_title("QQ")
    gp, op = zip(*comp.pp_points) if comp.pp_points else ((), ())
    ax_pp.plot(op, gp, ".", ms=3)
    ax_pp.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax_pp.set_xlabel("observed CDF")
    ax_pp.set_ylabel("generated CDF")
    ax_pp.set_title(f"PP (KS {comp.ks_sup_distance:.3f})")
    fig.suptitle(TITLES.get(name, name))
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_report(report, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [plot_comparison(c, name, out / f"{name}_qqpp.png")
            for name, c in sorted(report.comparisons.items())]
