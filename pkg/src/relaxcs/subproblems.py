"""The per-block updates that the reconstruction pipelines alternate over.

Conventions shared by all updates:

* Echo/coil stacks are numpy arrays: k-space ``y`` is (E, J, rows, cols),
  per-echo image blocks are (E, rows, cols).
* ``kappas[i, j]`` is the curvature used for the proximal majorization of
  the (echo i, coil j) data term ||y_ij - A_ij u_i||^2; any value at least
  twice the squared operator norm of A_ij keeps the majorization valid.
* The phase image enters as the angle array theta (radians in [0, 2pi)),
  with z = exp(1j * theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EchoTimes
from .solvers import QuadL1Problem, fista_l1, global_min_1d_e_batch, power_iteration_norm
from .transforms import SamplingOperator, WaveletFrame

__all__ = [
    "AdmmState",
    "build_operators",
    "estimate_kappas",
    "compute_q",
    "update_theta",
    "update_xi",
    "weighted_log_fit",
    "update_e",
    "update_dual",
]

_TINY = 1e-30


@dataclass
class AdmmState:
    """One iterate of the joint splitting: per-echo blocks plus the maps.

    xi must be nonnegative, e must live inside [e_min, e_max], and every
    block shares the (E, rows, cols) layout.
    """

    theta: np.ndarray
    xi: np.ndarray
    e: np.ndarray
    b: np.ndarray
    h0: np.ndarray
    r2star: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        shapes = {a.shape for a in (self.theta, self.xi, self.e, self.b)}
        if len(shapes) != 1 or self.theta.ndim != 3:
            raise ValueError("theta/xi/e/b must share one (E, rows, cols) shape")
        if self.h0.shape != self.theta.shape[1:] or self.r2star.shape != self.theta.shape[1:]:
            raise ValueError("h0/r2star must match the per-echo grid")
        if np.any(self.xi < 0):
            raise ValueError("xi must be nonnegative")


def build_operators(patterns, coils) -> list:
    """E x J grid of SamplingOperator for every (echo pattern, coil map) pair."""
    return [[SamplingOperator(p.mask, c) for c in coils.maps] for p in patterns.patterns]


def estimate_kappas(ops, power_iters: int = 30, safety: float = 1.05) -> np.ndarray:
    """Majorization curvatures kappa_ij = 2 * safety * ||A_ij||^2."""
    E, J = len(ops), len(ops[0])
    kap = np.empty((E, J))
    for i in range(E):
        for j in range(J):
            sigma = power_iteration_norm(ops[i][j].normal, ops[i][j].shape,
                                         iters=power_iters)
            kap[i, j] = 2.0 * safety * max(sigma, _TINY) ** 2
    return kap


def compute_q(ops, y: np.ndarray, u: np.ndarray, kappas: np.ndarray) -> np.ndarray:
    """Per-coil proximal points Q_ij = U_i - (2/kappa_ij) (A* A U_i - A* Y_ij)."""
    E, J = kappas.shape
    q = np.empty_like(y)
    for i in range(E):
        for j in range(J):
            op = ops[i][j]
            grad = op.adjoint(op.forward(u[i]) - y[i, j])
            q[i, j] = u[i] - (2.0 / kappas[i, j]) * grad
    return q


def update_theta(q: np.ndarray, kappas: np.ndarray,
                 theta_prev: np.ndarray) -> np.ndarray:
    """Closed-form phase update: the angle of the kappa-weighted coil sum.

    Pixels whose weighted sum vanishes keep their previous angle (the
    objective is flat in theta there).
    """
    s = np.einsum("ij,ij...->i...", kappas, q)
    theta = np.mod(np.angle(s), 2.0 * np.pi)
    return np.where(np.abs(s) > 0.0, theta, theta_prev)


def update_xi(q: np.ndarray, kappas: np.ndarray, theta: np.ndarray,
              e: np.ndarray, b: np.ndarray, rho: float,
              lambda1: float, frame: WaveletFrame,
              prox_iters: int, prox_tol: float = 1e-12,
              dual_state: Optional[np.ndarray] = None):
    """Magnitude update: analysis-l1 prox around the weighted proximal center.

    Centers are V_i = (sum_j kappa_ij Re(conj(z_i) Q_ij) - B_i + rho E_i)
    / (rho + sum_j kappa_ij); the result is clamped to nonnegative
    magnitudes. Per-echo thresholds are rescaled onto one shared tau so the
    prox solves all echoes in a single batch; the returned dual warm-starts
    the next call. Returns (xi, dual_state).
    """
    z = np.exp(1j * theta)
    p = np.real(np.conj(z)[:, None] * q)           # (E, J, rows, cols)
    ksum = kappas.sum(axis=1)                      # (E,)
    num = np.einsum("ij,ij...->i...", kappas, p) - b + rho * e
    denom = (rho + ksum)[:, None, None]
    v = num / denom
    taus = lambda1 / (rho + ksum)                  # per echo

    if lambda1 == 0.0:
        return np.maximum(v, 0.0), None
    scale = taus[:, None, None]
    prob = QuadL1Problem(center=v / scale, tau=1.0, frame=frame,
                         iters=prox_iters, tol=prox_tol)
    xi, dual = fista_l1(prob, dual_state=dual_state, return_dual=True)
    return np.maximum(xi * scale, 0.0), dual


def _closed_form_fit(logv: np.ndarray, weights: np.ndarray,
                     times: np.ndarray, r_max: float):
    """Per-pixel weighted linear least squares of h0 - t*r = log v.

    Pixels whose weighted design is (near-)singular -- fewer than two
    echoes carrying weight -- are excluded and return zeros.
    """
    t = times[:, None, None]
    sw = weights.sum(axis=0)
    swt = (weights * t).sum(axis=0)
    swtt = (weights * t * t).sum(axis=0)
    swl = (weights * logv).sum(axis=0)
    swtl = (weights * t * logv).sum(axis=0)
    det = sw * swtt - swt * swt
    # relative singularity guard: det scales like sw^2 * spread(t)^2
    ok = det > 1e-12 * np.maximum(sw * swtt, _TINY)
    det_safe = np.where(ok, det, 1.0)
    h0 = (swtt * swl - swt * swtl) / det_safe
    r = (swt * swl - sw * swtl) / det_safe
    h0 = np.where(ok, h0, 0.0)
    r = np.where(ok, np.clip(r, 0.0, r_max), 0.0)
    return h0, r, ok


def weighted_log_fit(values: np.ndarray, times: EchoTimes,
                     lambda2: float, lambda3: float,
                     frame: Optional[WaveletFrame],
                     iters: int, prox_iters: int,
                     e_min: float, r_max: float,
                     weights: Optional[np.ndarray] = None,
                     init: Optional[tuple] = None):
    """Fit (h0, r2star) to log values under echo weights with l1 priors.

    values: (E, rows, cols) magnitudes; entries at or below e_min carry no
    weight (their log would blow up the conditioning) and pixels with no
    usable echo return zeros. weights defaults to values**2, the
    low-SNR-suppressing choice; pass the current model-side echo images to
    weight by them instead.

    With lambda2 = lambda3 = 0 the exact per-pixel normal-equation solution
    is returned. Otherwise `iters` alternations of scalar-curvature proximal
    steps refine it: the h0 step centers at sum_i gamma_i F_i / sum gamma_i
    with threshold lambda2 / sum gamma_i, and the r step uses the analogous
    nu-weighted center with lambda3.
    """
    t = times.values
    usable = values > e_min
    w = (values ** 2 if weights is None else weights) * usable
    logv = np.where(usable, np.log(np.maximum(values, e_min)), 0.0)

    h0, r, ok = _closed_form_fit(logv, w, t, r_max)
    if lambda2 == 0.0 and lambda3 == 0.0:
        return h0, r

    if init is not None:
        h0, r = np.array(init[0], copy=True), np.array(init[1], copy=True)
    gam = 2.0 * w.reshape(w.shape[0], -1).max(axis=1)            # (E,)
    nu = gam * t * t
    gsum = gam.sum()
    nsum = nu.sum()
    if gsum <= 0.0:
        return np.zeros_like(h0), np.zeros_like(r)
    gam_safe = np.maximum(gam, _TINY)[:, None, None]
    nu_safe = np.maximum(nu, _TINY)[:, None, None]

    tcol = t[:, None, None]
    dual_h = dual_r = None
    for _ in range(max(1, iters)):
        resid = h0[None] - tcol * r[None] - logv
        grad_h = 2.0 * w * resid
        f_centers = h0[None] - grad_h / gam_safe
        center = np.einsum("i,i...->...", gam, f_centers) / gsum
        if lambda2 > 0.0:
            h0, dual_h = fista_l1(QuadL1Problem(center, lambda2 / gsum, frame, prox_iters),
                                  dual_state=dual_h, return_dual=True)
        else:
            h0 = center

        resid = h0[None] - tcol * r[None] - logv
        grad_r = -2.0 * tcol * w * resid
        g_centers = r[None] - grad_r / nu_safe
        center = np.einsum("i,i...->...", nu, g_centers) / nsum
        if lambda3 > 0.0:
            r, dual_r = fista_l1(QuadL1Problem(center, lambda3 / nsum, frame, prox_iters),
                                 dual_state=dual_r, return_dual=True)
        else:
            r = center
        r = np.clip(r, 0.0, r_max)

    h0 = np.where(ok, h0, 0.0)
    r = np.where(ok, r, 0.0)
    return h0, r


def update_e(xi: np.ndarray, b: np.ndarray, h0: np.ndarray, r2star: np.ndarray,
             times: EchoTimes, rho: float, lambda_model: float,
             e_min: float, e_max: float, tol: float = 1e-10) -> np.ndarray:
    """Model-side echo images: pixel-wise bounded global minimization.

    Solves, for every pixel of every echo, the 1-D nonconvex problem in
    d = log e over [log e_min, log e_max] with targets w_i = h0 - t_i r.
    """
    t = times.values[:, None, None]
    w = h0[None] - t * r2star[None]
    d = global_min_1d_e_batch(xi, w, b, rho, lambda_model,
                              math.log(e_min), math.log(e_max), tol)
    return np.exp(d)


def update_dual(b: np.ndarray, xi: np.ndarray, e: np.ndarray,
                rho: float) -> np.ndarray:
    """Dual ascent: B_i + rho (X_i - E_i)."""
    return b + rho * (xi - e)
