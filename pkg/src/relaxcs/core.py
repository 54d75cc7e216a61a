"""Shared domain types, image validation and masked error metrics.

Images are plain 2-D numpy arrays (row-major, float64 or complex128).
Multi-echo and multi-coil collections are stacked along a leading axis so
that pixel-wise algebra vectorizes naturally. Binary masks are real images
with {0, 1} entries, which lets them participate in ordinary image algebra.

All container types are value objects: construct once, treat as read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "EchoTimes",
    "MultiEchoSet",
    "CoilSet",
    "KSpaceData",
    "ReconParams",
    "ensure_real_image",
    "ensure_complex_image",
    "ensure_mask",
    "masked_relative_error",
    "image_linf_diff",
]


def ensure_real_image(a, name: str = "image") -> np.ndarray:
    """Validate and return a 2-D finite float64 image."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def ensure_complex_image(a, name: str = "image") -> np.ndarray:
    """Validate and return a 2-D finite complex128 image."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def ensure_mask(a, name: str = "mask") -> np.ndarray:
    """Validate a binary {0,1} real image."""
    arr = ensure_real_image(a, name)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} entries must be exactly 0 or 1")
    return arr


@dataclass(frozen=True)
class EchoTimes:
    """Strictly increasing echo times in milliseconds, at least two echoes."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size < 2:
            raise ValueError("at least two echo times are required")
        if v[0] <= 0 or np.any(np.diff(v) <= 0):
            raise ValueError("echo times must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    def truncated(self, keep: int) -> "EchoTimes":
        if keep < 2:
            raise ValueError("a decay fit needs at least two echoes")
        if keep > len(self):
            raise ValueError(f"cannot keep {keep} of {len(self)} echoes")
        return EchoTimes(self.values[:keep])


def default_echo_times(n_echoes: int = 6, first: float = 7.64,
                       spacing: float = 5.41) -> EchoTimes:
    """Six-echo GRE protocol timing: TE1 = 7.64 ms, spacing 5.41 ms."""
    return EchoTimes(first + spacing * np.arange(n_echoes, dtype=np.float64))


@dataclass(frozen=True)
class MultiEchoSet:
    """E homogeneous images stacked as (E, rows, cols) plus their echo times."""

    images: np.ndarray
    times: EchoTimes

    def __post_init__(self):
        arr = np.asarray(self.images)
        if arr.ndim != 3:
            raise ValueError(f"expected (E, rows, cols) stack, got shape {arr.shape}")
        if arr.shape[0] != len(self.times):
            raise ValueError(
                f"echo count {arr.shape[0]} does not match {len(self.times)} echo times")
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        else:
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr.real)) or (
                np.iscomplexobj(arr) and not np.all(np.isfinite(arr.imag))):
            raise ValueError("echo images contain non-finite entries")
        object.__setattr__(self, "images", arr)

    @classmethod
    def from_list(cls, images: Sequence[np.ndarray], times: EchoTimes) -> "MultiEchoSet":
        return cls(np.stack([np.asarray(im) for im in images]), times)

    @property
    def n_echoes(self) -> int:
        return self.images.shape[0]

    @property
    def shape(self) -> tuple:
        return self.images.shape[1:]

    def truncated(self, keep: int) -> "MultiEchoSet":
        return MultiEchoSet(self.images[:keep], self.times.truncated(keep))


@dataclass(frozen=True)
class CoilSet:
    """J complex receiver sensitivity maps stacked as (J, rows, cols)."""

    maps: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.maps, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(f"expected (J, rows, cols) stack, got shape {arr.shape}")
        if not np.all(np.isfinite(arr.real)) or not np.all(np.isfinite(arr.imag)):
            raise ValueError("coil maps contain non-finite entries")
        object.__setattr__(self, "maps", arr)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple:
        return self.maps.shape[1:]

    def rss(self) -> np.ndarray:
        """Root-sum-of-squares magnitude across coils."""
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=0))


@dataclass(frozen=True)
class KSpaceData:
    """Masked multi-coil k-space planes, (E, J, rows, cols), with their patterns."""

    y: np.ndarray
    patterns: "EchoPatternSet"  # noqa: F821  (defined in relaxcs.sampling)

    def __post_init__(self):
        arr = np.asarray(self.y, dtype=np.complex128)
        if arr.ndim != 4:
            raise ValueError(f"expected (E, J, rows, cols) stack, got shape {arr.shape}")
        if len(self.patterns.patterns) != arr.shape[0]:
            raise ValueError("one sampling pattern per echo is required")
        for p in self.patterns.patterns:
            if p.mask.shape != arr.shape[2:]:
                raise ValueError("pattern dimensions do not match k-space planes")
        object.__setattr__(self, "y", arr)

    @property
    def n_echoes(self) -> int:
        return self.y.shape[0]

    @property
    def n_coils(self) -> int:
        return self.y.shape[1]

    @property
    def shape(self) -> tuple:
        return self.y.shape[2:]


@dataclass(frozen=True)
class ReconParams:
    """Regularization weights, iteration budgets and tolerances.

    lambda1/lambda2/lambda3 weight the sparsity of the echo images, log
    spin-density and relaxation-rate maps; lambda_model couples the decay
    model; rho is the augmented-Lagrangian weight. e_min/e_max bound the
    model-side echo images (e_max=None derives log-domain bounds from the
    observed magnitudes). inner_iters counts subproblem passes per outer
    iteration; prox_iters bounds each l1 proximal solve.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    lambda_model: float = 1.0
    rho: float = 1.0
    outer_iters: int = 50
    inner_iters: int = 1
    prox_iters: int = 25
    tol_primal: float = 1e-4
    tol_change: float = 1e-4
    e_min: float = 1e-8
    e_max: Optional[float] = None
    r_max: float = 1.0
    power_iters: int = 30

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda_model", "rho"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.outer_iters < 1 or self.inner_iters < 1 or self.prox_iters < 1:
            raise ValueError("iteration budgets must be positive")
        if self.tol_primal <= 0 or self.tol_change <= 0:
            raise ValueError("tolerances must be positive")
        if self.e_min <= 0:
            raise ValueError("e_min must be positive (its log must be finite)")
        if self.e_max is not None and self.e_max <= self.e_min:
            raise ValueError("e_max must exceed e_min")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")

    def with_(self, **kw) -> "ReconParams":
        return replace(self, **kw)


def masked_relative_error(truth, estimate, mask) -> float:
    """Mean over masked pixels of |truth - estimate| / |truth|.

    The mask must be binary and the truth nonzero on every masked pixel.
    """
    t = ensure_real_image(truth, "truth")
    e = ensure_real_image(estimate, "estimate")
    m = ensure_mask(mask)
    if t.shape != e.shape or t.shape != m.shape:
        raise ValueError(f"dimension mismatch: {t.shape}, {e.shape}, {m.shape}")
    sel = m > 0
    if not np.any(sel):
        raise ValueError("mask selects no pixels")
    tv = t[sel]
    if np.any(tv == 0.0):
        raise ValueError("truth is zero on a masked pixel; relative error undefined")
    return float(np.mean(np.abs(tv - e[sel]) / np.abs(tv)))


def image_linf_diff(a, b) -> float:
    """Max absolute entrywise difference; complex entries compare by modulus."""
    aa = np.asarray(a)
    bb = np.asarray(b)
    if aa.shape != bb.shape:
        raise ValueError(f"dimension mismatch: {aa.shape} vs {bb.shape}")
    if np.iscomplexobj(aa) != np.iscomplexobj(bb):
        raise ValueError("images must share scalar kind (both real or both complex)")
    if aa.size == 0:
        return 0.0
    return float(np.max(np.abs(aa - bb)))
