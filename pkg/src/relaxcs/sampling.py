"""Poisson-disk undersampling patterns for the phase-encode plane.

Patterns are binary masks over the (rows, cols) grid with a fully sampled
calibration block at the center and a minimum Euclidean distance d_min
between any two sampled locations outside that block. Rate control works by
dart-throwing (Bridson annulus candidates) up to the requested sample count,
followed by a randomized fill sweep over the remaining admissible cells;
targets beyond what a maximal Poisson-disk packing can reach are rejected
with the achievable rate.

d_min <= 1 imposes no constraint between distinct grid cells, so that case
reduces to exact uniform random selection (the d_min = 0 special case).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ensure_mask

__all__ = [
    "SamplingPattern",
    "EchoPatternSet",
    "InfeasibleRateError",
    "poisson_disk",
    "make_echo_patterns",
    "calibration_box",
    "min_distance_violations",
]

_CANDIDATES_PER_DART = 30


class InfeasibleRateError(ValueError):
    """Raised when target_rate cannot be met under the d_min constraint."""

    def __init__(self, message: str, achievable_rate: float):
        super().__init__(message)
        self.achievable_rate = achievable_rate


@dataclass(frozen=True)
class SamplingPattern:
    """Binary inclusion mask plus the parameters that generated it."""

    mask: np.ndarray
    d_min: float
    target_rate: float
    calib_radius: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "mask", ensure_mask(self.mask, "pattern mask"))

    @property
    def rows(self) -> int:
        return self.mask.shape[0]

    @property
    def cols(self) -> int:
        return self.mask.shape[1]

    @property
    def rate(self) -> float:
        return float(self.mask.sum() / self.mask.size)


@dataclass(frozen=True)
class EchoPatternSet:
    """Per-echo patterns under a fixed or complementary scheme."""

    patterns: tuple
    scheme: str

    def __post_init__(self):
        if self.scheme not in ("fixed", "complementary"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        pats = tuple(self.patterns)
        if not pats:
            raise ValueError("at least one pattern is required")
        shapes = {p.mask.shape for p in pats}
        if len(shapes) != 1:
            raise ValueError("echo patterns must share dimensions")
        object.__setattr__(self, "patterns", pats)

    def union_count(self) -> int:
        u = np.zeros_like(self.patterns[0].mask, dtype=bool)
        for p in self.patterns:
            u |= p.mask > 0
        return int(u.sum())

    def truncated(self, keep: int) -> "EchoPatternSet":
        return EchoPatternSet(self.patterns[:keep], self.scheme)


def calibration_box(rows: int, cols: int, calib_radius: int):
    """Fully sampled central block: rows//2 - r .. rows//2 + r (exclusive).

    A radius of 0 means no calibration region.
    """
    if calib_radius == 0:
        return slice(0, 0), slice(0, 0)
    r0 = max(0, rows // 2 - calib_radius)
    r1 = min(rows, rows // 2 + calib_radius)
    c0 = max(0, cols // 2 - calib_radius)
    c1 = min(cols, cols // 2 + calib_radius)
    return slice(r0, r1), slice(c0, c1)


def _neighbor_template(d_min: float):
    w = int(math.ceil(d_min))
    dy, dx = np.mgrid[-w:w + 1, -w:w + 1]
    return w, (dy * dy + dx * dx) < d_min * d_min  # strict: dist >= d_min allowed


def poisson_disk(rows: int, cols: int, target_rate: float, d_min: float,
                 calib_radius: int = 0, seed: int = 0) -> SamplingPattern:
    """Generate one Poisson-disk pattern; deterministic for a given seed."""
    if rows < 1 or cols < 1:
        raise ValueError("grid must be nonempty")
    if not (0.0 < target_rate <= 1.0):
        raise ValueError("target_rate must lie in (0, 1]")
    if d_min < 0:
        raise ValueError("d_min must be nonnegative")

    n_total = rows * cols
    target_count = int(round(target_rate * n_total))
    rng = np.random.default_rng(seed)

    mask = np.zeros((rows, cols), dtype=bool)
    rs, cs = calibration_box(rows, cols, calib_radius)
    calib = np.zeros_like(mask)
    calib[rs, cs] = True
    mask |= calib
    n_calib = int(calib.sum())
    if n_calib > target_count and n_calib > math.ceil(1.1 * target_count):
        raise InfeasibleRateError(
            f"calibration region alone samples {n_calib / n_total:.3f} "
            f"of the grid, above target {target_rate}", n_calib / n_total)
    needed = max(0, target_count - n_calib)

    free = ~calib
    if d_min <= 1.0:
        flat_free = np.flatnonzero(free.ravel())
        take = min(needed, flat_free.size)
        chosen = rng.choice(flat_free, size=take, replace=False)
        mask.ravel()[chosen] = True
        return SamplingPattern(mask.astype(np.float64), d_min, target_rate,
                               calib_radius, seed)

    _bridson_fill(mask, free, needed, d_min, rng)

    achieved = int(mask.sum())
    if achieved < math.floor(0.9 * target_count):
        raise InfeasibleRateError(
            f"d_min={d_min} saturates near rate {achieved / n_total:.3f}, "
            f"below target {target_rate} (need >= {0.9 * target_rate:.3f})",
            achieved / n_total)
    return SamplingPattern(mask.astype(np.float64), d_min, target_rate,
                           calib_radius, seed)


def _bridson_fill(mask, free, needed, d_min, rng, avoid=None, reuse_prob=0.25):
    """Dart-throwing with annulus candidates, then a randomized fill sweep.

    `avoid` discourages (probabilistically) cells already used by earlier
    echoes; a final unrestricted sweep runs if the count is still short.
    Mutates `mask` in place and returns the number of darts placed.
    """
    rows, cols = mask.shape
    w, tmpl = _neighbor_template(d_min)
    placed = 0
    darts = np.zeros_like(mask)   # distance constraint applies to darts only

    def admissible(i, j):
        if not free[i, j] or darts[i, j]:
            return False
        i0, i1 = max(0, i - w), min(rows, i + w + 1)
        j0, j1 = max(0, j - w), min(cols, j + w + 1)
        sub = darts[i0:i1, j0:j1]
        t = tmpl[i0 - (i - w): i1 - (i - w), j0 - (j - w): j1 - (j - w)]
        return not np.any(sub & t)

    def place(i, j):
        nonlocal placed
        darts[i, j] = True
        mask[i, j] = True
        placed += 1

    if needed <= 0:
        return 0

    # seed dart
    flat_free = np.flatnonzero(free.ravel())
    start = int(rng.choice(flat_free))
    si, sj = divmod(start, cols)
    place(si, sj)
    active = [(si, sj)]

    while active and placed < needed:
        pick = int(rng.integers(len(active)))
        ai, aj = active[pick]
        found = False
        radii = d_min * (1.0 + rng.random(_CANDIDATES_PER_DART))
        angles = rng.random(_CANDIDATES_PER_DART) * 2.0 * math.pi
        for rad, ang in zip(radii, angles):
            i = int(round(ai + rad * math.sin(ang)))
            j = int(round(aj + rad * math.cos(ang)))
            if not (0 <= i < rows and 0 <= j < cols):
                continue
            if not admissible(i, j):
                continue
            if avoid is not None and avoid[i, j] and rng.random() > reuse_prob:
                continue
            place(i, j)
            active.append((i, j))
            found = True
            break
        if not found:
            active[pick] = active[-1]
            active.pop()

    # fill sweep over whatever admissible cells remain
    sweeps = [avoid is not None, False] if avoid is not None else [False]
    for penalize in sweeps:
        if placed >= needed:
            break
        order = rng.permutation(flat_free)
        for flat in order:
            if placed >= needed:
                break
            i, j = divmod(int(flat), cols)
            if penalize and avoid[i, j]:
                continue
            if admissible(i, j):
                place(i, j)
    return placed


def make_echo_patterns(n_echoes: int, scheme: str, rows: int, cols: int,
                       target_rate: float, d_min: float, calib_radius: int = 0,
                       seed: int = 0) -> EchoPatternSet:
    """Fixed (identical) or complementary (coverage-spreading) echo patterns."""
    if n_echoes < 1:
        raise ValueError("need at least one echo")
    if scheme == "fixed":
        p = poisson_disk(rows, cols, target_rate, d_min, calib_radius, seed)
        return EchoPatternSet((p,) * n_echoes, scheme)
    if scheme != "complementary":
        raise ValueError(f"unknown scheme {scheme!r}")

    patterns = []
    used = np.zeros((rows, cols), dtype=bool)
    for e in range(n_echoes):
        echo_seed = seed + 7919 * e
        p = _poisson_disk_avoiding(rows, cols, target_rate, d_min,
                                   calib_radius, echo_seed,
                                   used if e > 0 else None)
        patterns.append(p)
        used |= p.mask > 0
    return EchoPatternSet(tuple(patterns), scheme)


def _poisson_disk_avoiding(rows, cols, target_rate, d_min, calib_radius,
                           seed, avoid):
    n_total = rows * cols
    target_count = int(round(target_rate * n_total))
    rng = np.random.default_rng(seed)
    mask = np.zeros((rows, cols), dtype=bool)
    rs, cs = calibration_box(rows, cols, calib_radius)
    calib = np.zeros_like(mask)
    calib[rs, cs] = True
    mask |= calib
    needed = max(0, target_count - int(calib.sum()))
    free = ~calib

    if d_min <= 1.0:
        flat_free = np.flatnonzero(free.ravel())
        if avoid is None:
            chosen = rng.choice(flat_free, size=min(needed, flat_free.size),
                                replace=False)
        else:
            weights = np.where(avoid.ravel()[flat_free], 0.25, 1.0)
            weights /= weights.sum()
            chosen = rng.choice(flat_free, size=min(needed, flat_free.size),
                                replace=False, p=weights)
        mask.ravel()[chosen] = True
    else:
        _bridson_fill(mask, free, needed, d_min, rng, avoid=avoid)
        achieved = int(mask.sum())
        if achieved < math.floor(0.9 * target_count):
            raise InfeasibleRateError(
                f"d_min={d_min} saturates near rate {achieved / n_total:.3f}, "
                f"below target {target_rate}", achieved / n_total)
    return SamplingPattern(mask.astype(np.float64), d_min, target_rate,
                           calib_radius, seed)


def min_distance_violations(pattern: SamplingPattern) -> int:
    """Exhaustive count of sample pairs (outside calibration) closer than d_min."""
    d_min = pattern.d_min
    if d_min <= 1.0:
        return 0
    mask = pattern.mask > 0
    rows, cols = mask.shape
    rs, cs = calibration_box(rows, cols, pattern.calib_radius)
    pts = mask.copy()
    pts[rs, cs] = False
    w, tmpl = _neighbor_template(d_min)
    tmpl = tmpl.copy()
    tmpl[w, w] = False
    viol = 0
    for i, j in zip(*np.nonzero(pts)):
        i0, i1 = max(0, i - w), min(rows, i + w + 1)
        j0, j1 = max(0, j - w), min(cols, j + w + 1)
        sub = pts[i0:i1, j0:j1]
        t = tmpl[i0 - (i - w): i1 - (i - w), j0 - (j - w): j1 - (j - w)]
        viol += int(np.sum(sub & t))
    return viol // 2
