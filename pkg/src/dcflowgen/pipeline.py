"""End-to-end orchestration: inputs -> payload profile -> per-epoch schedule."""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .deconvolver import AckModel, DeconvolutionConfig, deconvolve
from .degseq import RackLayout
from .dist import read_distribution_csv
from .flowset import create_flowset
from .mapper import DRR_POLICIES, MappingResult, map_drr, map_random, mapping_quality
from .payload import FlowSizePMF, infer_payload_sizes
from .tm import TrafficProfile, build_tm
from .validator import L2Model, ValidationReport, validate

log = logging.getLogger(__name__)

PROFILE_FILES = ("n_intra", "n_inter", "b_intra", "b_inter", "s_flow", "iat")
FLOW_SIZE_SHIFT = 219.0
TM_ENTRY_SHIFT = 1000.0
SCHEDULE_HEADER = "start_seconds,src_id,dst_id,payload_bytes"
RNG_ALGORITHM = "numpy PCG64 seeded by SeedSequence([seed, epoch])"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str, epoch: int | None = None):
        where = f"stage={stage}" + (f" epoch={epoch}" if epoch is not None else "")
        super().__init__(f"[{where}] {message}")
        self.stage, self.epoch = stage, epoch


def bundled_profile_dir() -> Path:
    return Path(str(resources.files("dcflowgen") / "data" / "profile"))


@dataclass(frozen=True)
class RunConfig:
    racks: int = 72
    hosts_per_rack: int = 20
    duration: float = 60.0
    epoch_length: float = 10.0
    seed: int = 0
    r: float = 2.5
    mss: float = 1448.0
    profile_dir: str | None = None
    files: dict = field(default_factory=dict)
    apply_shifts: bool = True
    mapper_strategy: str = "drr"
    drr_policy: str = "requeue-rotate"
    alpha: float = 0.1
    omega: float = 100.0
    directions: str = "both"
    tolerance: float = 0.01
    max_attempts: int = 50
    deconv_grid_size: int = 1 << 20
    output_dir: str = "out"

    def __post_init__(self):
        if self.racks <= 0 or self.hosts_per_rack <= 0:
            raise ValueError("racks and hosts_per_rack must be positive")
        if self.epoch_length <= 0:
            raise ValueError("epoch_length must be positive")
        ratio = self.duration / self.epoch_length
        if self.duration <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("duration must be a positive multiple of epoch_length")
        if self.mapper_strategy not in ("drr", "random"):
            raise ValueError(f"unknown mapper_strategy {self.mapper_strategy!r}")
        if self.drr_policy not in DRR_POLICIES:
            raise ValueError(f"unknown drr_policy {self.drr_policy!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def epochs(self) -> int:
        return int(round(self.duration / self.epoch_length))

    @property
    def layout(self) -> RackLayout:
        return RackLayout.uniform(self.racks, self.hosts_per_rack)

    @property
    def ack_model(self) -> AckModel:
        return AckModel(r=self.r, mss=self.mss)

    def input_paths(self) -> dict[str, Path]:
        base = Path(self.profile_dir) if self.profile_dir else bundled_profile_dir()
        paths = {k: base / f"{k}.csv" for k in PROFILE_FILES}
        paths.update({k: Path(v) for k, v in self.files.items()})
        unknown = set(paths) - set(PROFILE_FILES)
        if unknown:
            raise ValueError(f"unknown distribution names: {sorted(unknown)}")
        missing = [str(p) for p in paths.values() if not p.is_file()]
        if missing:
            raise FileNotFoundError(f"missing distribution files: {missing}")
        return paths

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def digest(self) -> str:
        """SHA-256 over the generation settings and every input file's bytes."""
        h = hashlib.sha256()
        settings = {k: v for k, v in self.to_dict().items()
                    if k not in ("output_dir", "profile_dir", "files")}
        h.update(json.dumps(settings, sort_keys=True).encode())
        for name, path in sorted(self.input_paths().items()):
            h.update(name.encode())
            h.update(path.read_bytes())
        return h.hexdigest()


def load_observed(cfg: RunConfig) -> TrafficProfile:
    """Observed inputs, with the evaluation byte shifts applied if configured."""
    paths = cfg.input_paths()
    try:
        d = {k: read_distribution_csv(p) for k, p in paths.items()}
    except Exception as exc:
        raise PipelineError("load", str(exc)) from exc
    if cfg.apply_shifts:
        d["s_flow"] = d["s_flow"].shifted(FLOW_SIZE_SHIFT)
        d["b_intra"] = d["b_intra"].shifted(TM_ENTRY_SHIFT)
        d["b_inter"] = d["b_inter"].shifted(TM_ENTRY_SHIFT)
    return TrafficProfile(**d, model=cfg.ack_model)


def payload_profile(observed: TrafficProfile, cfg: RunConfig) -> TrafficProfile:
    """Replace Layer-2 byte and flow-size inputs by their payload counterparts."""
    model = observed.model
    dcfg = DeconvolutionConfig(grid_size=cfg.deconv_grid_size)
    try:
        b_intra = deconvolve(observed.b_intra, model, dcfg)
        b_inter = deconvolve(observed.b_inter, model, dcfg)
    except Exception as exc:
        raise PipelineError("deconvolve", str(exc)) from exc
    try:
        s_pl = infer_payload_sizes(FlowSizePMF.from_distribution(observed.s_flow, model))
    except Exception as exc:
        raise PipelineError("payload-extract", str(exc)) from exc
    return observed.replace(b_intra=b_intra, b_inter=b_inter, s_flow=s_pl.to_distribution())


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))


@dataclass(eq=False)
class Schedule:
    start_times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    sizes: np.ndarray
    meta: dict

    def __len__(self):
        return self.sizes.size

    def epoch_slices(self, epoch_length: float | None = None) -> list[MappingResult]:
        """Per-epoch mapped flows with times relative to each epoch start."""
        length = epoch_length or self.meta.get("epoch_length", 10.0)
        n = int(self.meta.get("epochs", 0)) or int(np.floor(self.start_times.max() / length)) + 1
        idx = np.minimum(np.floor(self.start_times / length).astype(np.int64), n - 1)
        bounds = np.searchsorted(idx, np.arange(n + 1))
        out = []
        for e in range(n):
            s = slice(bounds[e], bounds[e + 1])
            out.append(MappingResult(self.start_times[s] - e * length, self.src[s],
                                     self.dst[s], self.sizes[s]))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
        buf.write(SCHEDULE_HEADER + "\n")
        rows = zip(self.start_times.tolist(), self.src.tolist(), self.dst.tolist(),
                   self.sizes.astype(np.int64).tolist())
        buf.writelines(f"{t!r},{s},{d},{p}\n" for t, s, d, p in rows)
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read(cls, path) -> "Schedule":
        return cls.parse(Path(path).read_text())

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("line 1: missing '#' JSON meta header")
        try:
            meta = json.loads(lines[0][1:])
        except json.JSONDecodeError as exc:
            raise ValueError(f"line 1: bad meta JSON ({exc})") from exc
        if len(lines) < 2 or lines[1].strip() != SCHEDULE_HEADER:
            raise ValueError(f"line 2: expected header {SCHEDULE_HEADER!r}")
        n = len(lines) - 2
        t = np.empty(n)
        s = np.empty(n, np.int64)
        d = np.empty(n, np.int64)
        p = np.empty(n)
        for k, line in enumerate(lines[2:]):
            parts = line.split(",")
            try:
                if len(parts) != 4:
                    raise ValueError(f"expected 4 fields, got {len(parts)}")
                t[k], s[k], d[k], p[k] = float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ValueError(f"line {k + 3}: {exc}") from None
        if n and np.any(np.diff(t) < 0):
            raise ValueError("schedule is not sorted by start time")
        return cls(t, s, d, p, meta)

    def __eq__(self, other):
        return (isinstance(other, Schedule) and self.meta == other.meta
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("start_times", "src", "dst", "sizes")))


def run_epoch(profile: TrafficProfile, cfg: RunConfig, epoch: int):
    """One epoch: TM, balanced flow set and mapping (times relative to the epoch)."""
    rng = epoch_rng(cfg.seed, epoch)
    layout = cfg.layout
    try:
        tm = build_tm(profile, layout, rng, directions=cfg.directions,
                      epoch_length=cfg.epoch_length)
    except Exception as exc:
        raise PipelineError("tm-generate", str(exc), epoch) from exc
    if tm.total <= 0:
        raise PipelineError("tm-generate", "traffic matrix is empty", epoch)
    try:
        fs = create_flowset(tm, profile.s_flow, profile.iat, rng, tolerance=cfg.tolerance,
                            max_attempts=cfg.max_attempts)
    except Exception as exc:
        raise PipelineError("flowset", str(exc), epoch) from exc
    try:
        if cfg.mapper_strategy == "drr":
            mapped = map_drr(fs, tm, rng, alpha=cfg.alpha, omega=cfg.omega,
                             policy=cfg.drr_policy)
        else:
            mapped = map_random(fs, tm, rng)
    except Exception as exc:
        raise PipelineError("map", str(exc), epoch) from exc
    return tm, fs, mapped


def run_pipeline(cfg: RunConfig, write: bool = True) -> Schedule:
    observed = load_observed(cfg)
    profile = payload_profile(observed, cfg)
    parts, epochs_meta = [], []
    for e in range(cfg.epochs):
        tm, fs, mapped = run_epoch(profile, cfg, e)
        q = mapping_quality(tm, mapped)
        epochs_meta.append({"epoch": e, "flows": len(mapped), "epsilon": fs.epsilon,
                            "attempts": fs.attempts, "iat_scale": fs.iat_scale,
                            "tm_entries": tm.nnz, "tm_bytes": tm.total, "topsoe": q})
        log.info("epoch %d: %d flows, epsilon %.4f, topsoe %.4f", e, len(mapped), fs.epsilon, q)
        parts.append((mapped.start_times + e * cfg.epoch_length, mapped.src, mapped.dst,
                      mapped.sizes))
    cat = [np.concatenate(x) for x in zip(*parts)]
    meta = {"tool": "dcflowgen", "version": __version__, "seed": cfg.seed,
            "config_digest": cfg.digest(), "rng": RNG_ALGORITHM, "epochs": cfg.epochs,
            "epoch_length": cfg.epoch_length, "racks": cfg.racks,
            "hosts_per_rack": cfg.hosts_per_rack, "mapper": cfg.mapper_strategy,
            "per_epoch": epochs_meta}
    sched = Schedule(*cat, meta)
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        sched.write(out / "schedule.csv")
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return sched


def run_validation(cfg: RunConfig, schedule_path, out_dir=None, plots: bool = True) -> ValidationReport:
    """Validate a schedule file against the configured inputs; write JSON, CSV and figures."""
    try:
        sched = Schedule.read(schedule_path)
    except (OSError, ValueError) as exc:
        raise PipelineError("schedule-parse", str(exc)) from exc
    digest = sched.meta.get("config_digest")
    if digest and digest != cfg.digest():
        log.warning("schedule was generated with a different configuration or input files")
    observed = load_observed(cfg)
    report = validate(sched.epoch_slices(cfg.epoch_length), observed, cfg.layout,
                      L2Model(ack_model=cfg.ack_model), cfg.epoch_length)
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    for name, comp in report.comparisons.items():
        for kind, pts in (("qq", comp.qq_points), ("pp", comp.pp_points)):
            lines = ["generated,observed"] + [f"{a!r},{b!r}" for a, b in pts]
            (out / f"{name}_{kind}.csv").write_text("\n".join(lines) + "\n")
    if plots:
        from .plotting import plot_report
        plot_report(report, out)
    return report
