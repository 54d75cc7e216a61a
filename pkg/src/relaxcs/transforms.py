"""Measurement and sparsity operators.

SamplingOperator is the masked unitary-FFT coil operator: forward maps an
image u to mask * FFT(coil * u); with full sampling and a unit coil it is an
isometry, so Lipschitz constants of the data terms are bounded by coil
magnitude maxima.

WaveletFrame is the sparsity-averaging frame: the concatenation of the
orthonormal periodized Db1..Db8 transforms scaled by 1/sqrt(members), a
tight frame with frame operator equal to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ensure_complex_image
from .wavelets import dwt2_packed, idwt2_packed

__all__ = ["SamplingOperator", "WaveletFrame", "soft_threshold"]


@dataclass(frozen=True)
class SamplingOperator:
    """One (echo, coil) measurement operator: pattern-masked FFT after coil weighting.

    The FFT is unitary (1/sqrt(N) both directions) and k-space is stored in
    the centered convention (DC at [rows//2, cols//2], matching the pattern
    grids), so the operator norm is at most max |coil|.
    """

    mask: np.ndarray   # (rows, cols), {0,1}
    coil: np.ndarray   # (rows, cols), complex sensitivity map

    def __post_init__(self):
        coil = ensure_complex_image(self.coil, "coil")
        mask = np.asarray(self.mask, dtype=np.float64)
        if mask.shape != coil.shape:
            raise ValueError(f"mask {mask.shape} vs coil {coil.shape} dimension mismatch")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "coil", coil)

    @property
    def shape(self) -> tuple:
        return self.coil.shape

    def forward(self, u: np.ndarray) -> np.ndarray:
        """P F (S * u); entries outside the pattern are zero."""
        u = np.asarray(u)
        if u.shape[-2:] != self.shape:
            raise ValueError(f"image {u.shape} does not match operator {self.shape}")
        spec = np.fft.fftshift(np.fft.fft2(self.coil * u, norm="ortho"), axes=(-2, -1))
        return self.mask * spec

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """conj(S) * F^-1 (P y)."""
        y = np.asarray(y)
        if y.shape[-2:] != self.shape:
            raise ValueError(f"data {y.shape} does not match operator {self.shape}")
        spec = np.fft.ifftshift(self.mask * y, axes=(-2, -1))
        return np.conj(self.coil) * np.fft.ifft2(spec, norm="ortho")

    def normal(self, u: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(u))


def soft_threshold(c: np.ndarray, tau: float) -> np.ndarray:
    """Entrywise sign(c) * max(|c| - tau, 0); the exact l1 proximal map."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    c = np.asarray(c)
    return np.sign(c) * np.maximum(np.abs(c) - tau, 0.0)


class WaveletFrame:
    """Concatenated Db1..Db8 orthonormal transforms scaled to a tight frame.

    Coefficient vectors are member-major: the flattened packed-quadrant
    transform of member Db1 first, then Db2, etc.; within each member the
    coarsest sub-band sits first (top-left of the packed grid). Images whose
    sides are not divisible by 2**levels are symmetric-extended on the
    bottom/right before analysis and cropped after synthesis; on such padded
    grids the round trip is still exact but Parseval holds only up to the
    padding energy.
    """

    def __init__(self, rows: int, cols: int, orders=tuple(range(1, 9)), levels: int = 4):
        if rows < 2 or cols < 2:
            raise ValueError("frame needs at least a 2x2 grid")
        if len(orders) < 1:
            raise ValueError("at least one wavelet member is required")
        self.rows = int(rows)
        self.cols = int(cols)
        self.orders = tuple(int(o) for o in orders)
        self.levels = max(1, min(int(levels), max_levels_for(rows), max_levels_for(cols)))
        div = 1 << self.levels
        self.prows = ((self.rows + div - 1) // div) * div
        self.pcols = ((self.cols + div - 1) // div) * div
        self.scale = 1.0 / np.sqrt(len(self.orders))

    @property
    def n_members(self) -> int:
        return len(self.orders)

    @property
    def n_coeffs(self) -> int:
        return self.n_members * self.prows * self.pcols

    def _pad(self, x: np.ndarray) -> np.ndarray:
        pr, pc = self.prows - self.rows, self.pcols - self.cols
        if pr == 0 and pc == 0:
            return x
        width = [(0, 0)] * (x.ndim - 2) + [(0, pr), (0, pc)]
        return np.pad(x, width, mode="symmetric")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Analysis: real image (or leading-batched stack) -> coefficient vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2:] != (self.rows, self.cols):
            raise ValueError(
                f"image {x.shape[-2:]} does not match frame grid {(self.rows, self.cols)}")
        xp = self._pad(x)
        parts = [dwt2_packed(xp, o, self.levels) for o in self.orders]
        stacked = np.stack(parts, axis=-3) * self.scale
        return stacked.reshape(x.shape[:-2] + (self.n_coeffs,))

    def adjoint(self, c: np.ndarray) -> np.ndarray:
        """Synthesis Phi*: coefficient vector -> image (round trip is identity)."""
        c = np.asarray(c, dtype=np.float64)
        if c.shape[-1] != self.n_coeffs:
            raise ValueError(
                f"coefficient length {c.shape[-1]} != expected {self.n_coeffs}")
        grids = c.reshape(c.shape[:-1] + (self.n_members, self.prows, self.pcols))
        out = np.zeros(c.shape[:-1] + (self.prows, self.pcols))
        for i, o in enumerate(self.orders):
            out += idwt2_packed(grids[..., i, :, :], o, self.levels)
        out *= self.scale
        return out[..., : self.rows, : self.cols]


def max_levels_for(n: int) -> int:
    lev = 0
    m = int(n)
    # padding can always lift n to the next multiple of 2^lev, but depth
    # beyond log2(n) would collapse the coarse band to nothing useful
    while (1 << (lev + 1)) <= m:
        lev += 1
    return lev
