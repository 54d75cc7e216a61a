"""Synthetic ground truth and the forward acquisition simulator.

Phantoms provide spin density, relaxation rate, per-echo smooth phase maps
and a support mask at desk scale; the simulator produces masked multi-coil
k-space through the coil-weighted unitary FFT with complex Gaussian noise on
the sampled entries only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CoilSet, EchoTimes, KSpaceData, MultiEchoSet, ensure_mask, ensure_real_image
from .sampling import EchoPatternSet

__all__ = [
    "Phantom",
    "AcquisitionSpec",
    "make_phantom",
    "decay_images",
    "synth_coils",
    "simulate_kspace",
    "truncate_echoes",
    "coil_combine",
]

PRESETS = ("shepp-like", "blocks", "random-smooth")

R2_LO, R2_HI = 0.01, 0.2   # 1/ms, brackets tissue rates for the TE grids used


@dataclass(frozen=True)
class Phantom:
    """Ground truth: x0 (>= 0, zero off support), r2star (1/ms), phase, support."""

    x0: np.ndarray
    r2star: np.ndarray
    theta: MultiEchoSet
    support: np.ndarray

    def __post_init__(self):
        x0 = ensure_real_image(self.x0, "x0")
        r2 = ensure_real_image(self.r2star, "r2star")
        sup = ensure_mask(self.support, "support")
        if x0.shape != r2.shape or x0.shape != sup.shape or self.theta.shape != x0.shape:
            raise ValueError("phantom fields must share dimensions")
        if np.any(x0[sup == 0] != 0.0):
            raise ValueError("x0 must vanish outside the support")
        if np.any(x0 < 0) or np.any(r2 < 0):
            raise ValueError("x0 and r2star must be nonnegative")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "r2star", r2)
        object.__setattr__(self, "support", sup)


@dataclass(frozen=True)
class AcquisitionSpec:
    """Echo timing, coils, per-echo patterns and the k-space noise level."""

    times: EchoTimes
    coils: CoilSet
    patterns: EchoPatternSet
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if len(self.patterns.patterns) != len(self.times):
            raise ValueError("one pattern per echo time is required")
        if self.patterns.patterns[0].mask.shape != self.coils.shape:
            raise ValueError("pattern and coil dimensions disagree")


def _smooth_field(rng, rows, cols, cutoff=0.08):
    """Band-limited random field in [0, 1], deterministic per rng state."""
    spec = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    fy = np.fft.fftfreq(rows)[:, None]
    fx = np.fft.fftfreq(cols)[None, :]
    spec *= np.exp(-(fy ** 2 + fx ** 2) / (2 * cutoff ** 2))
    field = np.real(np.fft.ifft2(spec))
    lo, hi = field.min(), field.max()
    return (field - lo) / (hi - lo) if hi > lo else np.zeros((rows, cols))


def _ellipse(rows, cols, cy, cx, ry, rx, angle=0.0):
    y, x = np.mgrid[0:rows, 0:cols]
    y = (y - cy * rows) / rows
    x = (x - cx * cols) / cols
    ca, sa = math.cos(angle), math.sin(angle)
    u = ca * x + sa * y
    v = -sa * x + ca * y
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def make_phantom(rows: int, cols: int, preset: str = "shepp-like",
                 seed: int = 0, times: EchoTimes = None) -> Phantom:
    """Piecewise-smooth phantom with x0 in [0,1] and r2star in [0.01, 0.2]/ms."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if times is None:
        from .core import default_echo_times
        times = default_echo_times()
    rng = np.random.default_rng(seed)

    if preset == "shepp-like":
        head = _ellipse(rows, cols, 0.5, 0.5, 0.42, 0.36)
        support = head
        x0 = np.where(head, 0.85, 0.0)
        r2 = np.where(head, 0.05, 0.0)
        lobes = [
            (0.38, 0.40, 0.16, 0.12, 0.3, 0.95, 0.11),
            (0.38, 0.62, 0.17, 0.11, -0.4, 0.65, 0.16),
            (0.66, 0.50, 0.12, 0.16, 0.0, 0.45, 0.03),
            (0.52, 0.50, 0.05, 0.05, 0.0, 1.0, 0.19),
        ]
        for cy, cx, ry, rx, ang, amp, rate in lobes:
            e = _ellipse(rows, cols, cy, cx, ry, rx, ang)
            x0 = np.where(e & head, amp, x0)
            r2 = np.where(e & head, rate, r2)
        bump = 0.08 * (_smooth_field(rng, rows, cols) - 0.5)
        x0 = np.where(head, np.clip(x0 + bump, 0.1, 1.0), 0.0)
    elif preset == "blocks":
        support = np.zeros((rows, cols), dtype=bool)
        x0 = np.zeros((rows, cols))
        r2 = np.zeros((rows, cols))
        blocks = [
            (0.15, 0.15, 0.45, 0.50, 0.95, 0.03),
            (0.15, 0.55, 0.45, 0.85, 0.60, 0.08),
            (0.55, 0.15, 0.85, 0.50, 0.75, 0.13),
            (0.55, 0.55, 0.85, 0.85, 0.45, 0.18),
        ]
        for r0, c0, r1, c1, amp, rate in blocks:
            sl = (slice(int(r0 * rows), int(r1 * rows)),
                  slice(int(c0 * cols), int(c1 * cols)))
            support[sl] = True
            x0[sl] = amp
            r2[sl] = rate
    else:  # random-smooth
        f = _smooth_field(rng, rows, cols)
        support = f > np.quantile(f, 0.5)
        x0 = np.where(support, 0.2 + 0.8 * _smooth_field(rng, rows, cols), 0.0)
        r2 = np.where(support,
                      R2_LO + (R2_HI - R2_LO) * _smooth_field(rng, rows, cols), 0.0)

    r2 = np.clip(r2, 0.0, R2_HI)
    r2[~support] = 0.0

    # smooth low-order polynomial phase per echo: a static receive/excitation
    # term plus an off-resonance term that accrues linearly with echo time
    # (GRE preserves field-inhomogeneity dephasing, so late echoes wrap more)
    y, x = np.mgrid[0:rows, 0:cols]
    yn = y / max(rows - 1, 1) - 0.5
    xn = x / max(cols - 1, 1) - 0.5
    c = rng.uniform(-1.0, 1.0, size=6)
    base = (c[0] + 2.0 * c[1] * xn + 2.0 * c[2] * yn
            + c[3] * xn * yn + c[4] * xn ** 2 + c[5] * yn ** 2)
    f = rng.uniform(-1.0, 1.0, size=6)
    field = 0.12 * (f[0] + 2.0 * f[1] * xn + 2.0 * f[2] * yn
                    + f[3] * xn * yn + f[4] * xn ** 2 + f[5] * yn ** 2)  # rad/ms
    thetas = [np.mod(base + t * field, 2.0 * np.pi) for t in times.values]
    theta = MultiEchoSet(np.stack(thetas), times)

    return Phantom(x0=x0, r2star=r2, theta=theta,
                   support=support.astype(np.float64))


def decay_images(phantom: Phantom, times: EchoTimes) -> MultiEchoSet:
    """Monoexponential magnitudes x0 * exp(-t_i * r2star) for each echo."""
    t = times.values[:, None, None]
    return MultiEchoSet(phantom.x0[None] * np.exp(-t * phantom.r2star[None]), times)


def synth_coils(rows: int, cols: int, n_coils: int) -> CoilSet:
    """Smooth Gaussian-lobe sensitivities at equispaced border positions.

    Stands in for measured/ESPIRiT maps; the root-sum-of-squares is strictly
    positive everywhere so conjugate-coil combination is well posed.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    y, x = np.mgrid[0:rows, 0:cols]
    yn = y / max(rows - 1, 1) - 0.5
    xn = x / max(cols - 1, 1) - 0.5
    sigma = 0.55
    maps = []
    for j in range(n_coils):
        if n_coils == 1:
            cy, cx = 0.0, 0.0
        else:
            ang = 2.0 * math.pi * j / n_coils
            cy, cx = 0.45 * math.sin(ang), 0.45 * math.cos(ang)
        mag = np.exp(-((yn - cy) ** 2 + (xn - cx) ** 2) / (2 * sigma ** 2))
        phase = 0.7 * math.sin(2.4 * j + 0.9) * xn + 0.7 * math.cos(1.7 * j) * yn
        maps.append(mag * np.exp(1j * phase))
    return CoilSet(np.stack(maps))


def simulate_kspace(phantom: Phantom, spec: AcquisitionSpec, seed: int = 0) -> KSpaceData:
    """Masked multi-coil measurements of the decayed, phased echo images.

    Noise is complex Gaussian with standard deviation noise_sigma per
    sampled k-space entry (split evenly between the real and imaginary
    parts); unsampled entries stay exactly zero.
    """
    xi = decay_images(phantom, spec.times).images
    z = np.exp(1j * phantom.theta.images)
    if xi.shape[1:] != spec.coils.shape:
        raise ValueError("phantom and coil dimensions disagree")
    rng = np.random.default_rng(seed)
    E = xi.shape[0]
    J = spec.coils.n_coils
    rows, cols = spec.coils.shape
    y = np.zeros((E, J, rows, cols), dtype=np.complex128)
    for i in range(E):
        mask = spec.patterns.patterns[i].mask
        u = z[i] * xi[i]
        for j in range(J):
            plane = np.fft.fftshift(np.fft.fft2(spec.coils.maps[j] * u, norm="ortho"))
            if spec.noise_sigma > 0:
                noise = (rng.standard_normal((rows, cols))
                         + 1j * rng.standard_normal((rows, cols)))
                plane = plane + spec.noise_sigma / math.sqrt(2.0) * noise
            y[i, j] = mask * plane
    return KSpaceData(y=y, patterns=spec.patterns)


def coil_combine(images: np.ndarray, coils: CoilSet) -> np.ndarray:
    """Conjugate-coil (SENSE-style) combination: sum conj(S_j) m_j / sum |S_j|^2."""
    rss2 = np.maximum(np.sum(np.abs(coils.maps) ** 2, axis=0), 1e-30)
    return np.einsum("j...,ij...->i...", np.conj(coils.maps), images) / rss2


def truncate_echoes(data, keep: int):
    """Keep the first `keep` echoes of a MultiEchoSet or KSpaceData.

    Late echoes that fall below the monoexponential model get dropped before
    fitting; at least two echoes must remain.
    """
    if keep < 2:
        raise ValueError("a decay fit needs at least two echoes")
    if isinstance(data, MultiEchoSet):
        return data.truncated(keep)
    if isinstance(data, KSpaceData):
        if keep > data.n_echoes:
            raise ValueError(f"cannot keep {keep} of {data.n_echoes} echoes")
        return KSpaceData(y=data.y[:keep], patterns=data.patterns.truncated(keep))
    raise TypeError(f"cannot truncate {type(data).__name__}")
