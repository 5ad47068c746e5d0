"""Recover payload TM-entry sizes from Layer-2 TM-entry sizes.

A Layer-2 entry is modelled as ``Z = X + beta * Y`` with ``X`` the payload
sent ``i -> j`` and ``Y`` the payload sent ``j -> i`` (acknowledged by
``beta * Y`` bytes), ``X`` and ``Y`` iid.  With ``f`` the characteristic
function of ``X`` and ``g`` that of ``Z``, ``g(t) = f(t) f(beta t)``, and
since ``beta < 1`` the relation unrolls into the telescoping product

    f(t) = prod_k g(beta**(2k) t) / g(beta**(2k+1) t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import isotonic_regression
from scipy.signal import czt, fftconvolve

from .dist import DensityGrid, DistributionError, StepDistribution


class DeconvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class AckModel:
    r: float = 2.5
    mss: float = 1448.0
    ack_packet_size: float = 66.0

    def __post_init__(self):
        if not (self.r > 0 and self.mss > 0 and self.ack_packet_size > 0):
            raise ValueError("r, mss and ack_packet_size must be positive")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta={self.beta} outside (0, 1)")

    @property
    def bytes_per_ack(self) -> float:
        """Payload bytes acknowledged by one ACK packet (``mss * r``)."""
        return self.mss * self.r

    @property
    def beta(self) -> float:
        """ACK bytes per payload byte."""
        return self.ack_packet_size / (self.mss * self.r)


@dataclass(frozen=True)
class DeconvolutionConfig:
    grid_size: int = 1 << 20
    product_terms: int = 64
    smoothing_window: int = 5
    negativity_clip: bool = True
    clip_method: str = "isotonic"
    support_margin: float = 1.05
    min_char_abs: float = 1e-12
    regularization: float = 1e-4

    def __post_init__(self):
        if self.product_terms < 1:
            raise ValueError("product_terms must be >= 1")
        if self.grid_size < 2 or self.grid_size & (self.grid_size - 1):
            raise ValueError("grid_size must be a power of two")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be an odd positive count")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.clip_method not in ("isotonic", "zero"):
            raise ValueError(f"unknown clip_method {self.clip_method!r}")


# phase below which g is replaced by its two-cumulant expansion
_TINY_PHASE = 1e-6


def _char_fn(masses: np.ndarray, scale: float, n_freq: int, mean: float, var: float):
    """``g(scale * w_m)`` for DFT frequencies ``m = 0 .. n_freq-1``.

    Evaluated exactly by a chirp-z transform; once the largest phase is
    negligible the expansion ``exp(-i w mu - w^2 var / 2)`` (in bin units)
    is exact to double precision and much cheaper.
    """
    n = masses.size
    last = np.flatnonzero(masses)[-1] if masses.any() else 0
    max_phase = 2 * math.pi * scale * (n_freq - 1) * last / n
    w = 2 * math.pi * scale * np.arange(n_freq) / n
    if max_phase < _TINY_PHASE:
        return np.exp(-1j * w * mean - 0.5 * w * w * var)
    if scale == 1.0:
        return np.fft.rfft(masses)[:n_freq]
    return czt(masses, m=n_freq, w=np.exp(-2j * math.pi * scale / n), a=1.0)


def deconvolve(z: StepDistribution, model: AckModel = AckModel(),
               cfg: DeconvolutionConfig = DeconvolutionConfig()) -> StepDistribution:
    """Distribution of ``X`` given the distribution of ``Z = X + beta Y``.

    Pipeline: rasterize ``z`` onto a uniform grid, take the characteristic
    function, evaluate the truncated product, invert, then remove negative
    densities, smooth with a centred moving average and renormalize.
    """
    beta = model.beta
    lo, hi = z.support
    if hi == lo or z.values.size == 1:
        return StepDistribution.point_mass(hi / (1 + beta), z.support_kind)
    n = cfg.grid_size
    h = cfg.support_margin * hi / n
    p = _rasterize(z, h, n)
    idx = np.arange(n, dtype=np.float64)
    mean = float(np.dot(idx, p))
    var = float(np.dot((idx - mean) ** 2, p))
    n_freq = n // 2 + 1

    f = np.ones(n_freq, dtype=np.complex128)
    for k in range(cfg.product_terms):
        num_scale, den_scale = beta ** (2 * k), beta ** (2 * k + 1)
        den = _char_fn(p, den_scale, n_freq, mean, var)
        small = np.abs(den) < cfg.min_char_abs
        if small.any():
            m = int(np.flatnonzero(small)[0])
            raise DeconvolutionError(
                f"characteristic function vanishes at frequency bin {m} "
                f"(term {k}, |g|={abs(den[m]):.3e}); the product does not converge")
        num = _char_fn(p, num_scale, n_freq, mean, var)
        # Tikhonov-damped division: near-zeros of g amplify rasterization error
        lam2 = cfg.regularization ** 2
        f *= num * np.conj(den) / (den.real ** 2 + den.imag ** 2 + lam2)
        if den_scale ** 2 * n * n < 1e-30:
            break  # remaining factors are 1 in double precision

    dens = np.fft.irfft(f, n=n)
    if cfg.negativity_clip:
        dens = _remove_negative(dens, cfg.clip_method)
    if cfg.smoothing_window > 1:
        dens = uniform_filter1d(dens, cfg.smoothing_window, mode="constant")
        dens = np.clip(dens, 0.0, None)
    total = dens.sum()
    if not total > 0:
        raise DeconvolutionError("deconvolved density has no positive mass")
    return DensityGrid(0.0, h, dens / total).to_distribution(z.support_kind)


def _rasterize(z: StepDistribution, h: float, n: int) -> np.ndarray:
    """Grid masses of ``z``; atoms are split linearly so their mean is kept."""
    if z.interpolation != "step":
        return DensityGrid.from_distribution(z, h, n).masses
    v, prob = z.pmf()
    pos = v / h
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    out = np.zeros(n + 1)
    np.add.at(out, lo, prob * (1 - frac))
    np.add.at(out, lo + 1, prob * frac)
    out[n - 1] += out[n]
    return out[:n]


def _remove_negative(dens: np.ndarray, method: str) -> np.ndarray:
    """Make a noisy density non-negative.

    ``"zero"`` clips negative bins, which adds mass wherever the inverse
    transform rings (typically far out in the tail, inflating the mean).
    ``"isotonic"`` instead projects the cumulative sum onto non-decreasing
    sequences, so negative lobes cancel against neighbouring positive ones
    and both the total mass and the mean are (nearly) kept.
    """
    if method == "zero":
        return np.clip(dens, 0.0, None)
    cum = isotonic_regression(np.cumsum(dens)).x
    return np.clip(np.diff(np.clip(cum, 0.0, None), prepend=0.0), 0.0, None)


def _scaled_grid(masses: np.ndarray, scale: float) -> np.ndarray:
    """Masses at ``i`` moved to ``scale * i``, split linearly between bins."""
    pos = scale * np.arange(masses.size)
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    out = np.zeros(masses.size + 1)
    np.add.at(out, lo, masses * (1 - frac))
    np.add.at(out, lo + 1, masses * frac)
    return out


def reconvolve_check(x: StepDistribution, model: AckModel = AckModel(),
                     grid_size: int = 1 << 20, max_atoms: int = 4096) -> StepDistribution:
    """Distribution of ``X + beta Y`` for ``X, Y`` iid from ``x``.

    Small atomic inputs are enumerated exactly; everything else goes
    through a uniform grid.
    """
    beta = model.beta
    if x.interpolation == "step" and x.values.size <= max_atoms:
        v, p = x.pmf()
        sums = (v[:, None] + beta * v[None, :]).ravel()
        probs = (p[:, None] * p[None, :]).ravel()
        return StepDistribution.from_pmf(sums, probs, x.support_kind)
    hi = x.support[1]
    if hi <= 0:
        return StepDistribution.point_mass(0.0, x.support_kind)
    h = 1.05 * hi * (1 + beta) / grid_size
    grid = DensityGrid.from_distribution(x, h, grid_size)
    ack = _scaled_grid(grid.masses, beta)
    masses = fftconvolve(grid.masses, ack)[:grid_size]
    masses = np.clip(masses, 0.0, None)
    if masses.sum() <= 0:
        raise DistributionError("reconvolution lost all mass")
    return DensityGrid(0.0, h, masses / masses.sum()).to_distribution(x.support_kind)
