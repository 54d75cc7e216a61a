"""End-to-end reconstruction pipelines and the parameter tuner.

Three variants recover (x0, r2star, phase, echo magnitudes) from masked
multi-coil k-space:

* decoupled   -- per-echo CS recovery of the echo images, then a weighted
                 log-linear fit of the decay model;
* joint_admm  -- the splitting that couples both stages through a consensus
                 constraint between the measurement-side and model-side echo
                 images, with dual updates;
* model_based -- the baseline that parameterizes the data term directly by
                 (x0, r2star) with sparsity on those two maps only.

Setting rho = 0 (with zero duals) degenerates the joint pipeline to the
decoupled one: the consensus penalty vanishes, so the model-side images are
simply slaved to the measurement-side ones and a single outer iteration
reproduces the two-stage pipeline exactly. recon_joint_admm honors that
reduction instead of rejecting rho = 0.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CoilSet, EchoTimes, KSpaceData, MultiEchoSet, ReconParams
from .phantom import AcquisitionSpec, Phantom, coil_combine, decay_images, simulate_kspace
from .solvers import QuadL1Problem, fista_l1, power_iteration_norm
from .subproblems import (build_operators, compute_q, estimate_kappas, update_dual,
                          update_e, update_theta, update_xi, weighted_log_fit)
from .transforms import WaveletFrame

__all__ = [
    "ConvergenceTrace",
    "ReconResult",
    "ReconMethod",
    "METHOD_NAMES",
    "recon_decoupled",
    "recon_joint_admm",
    "recon_model_based",
    "reconstruct",
    "tune_parameters",
    "check_convergence_preconditions",
    "PreconditionReport",
]

METHOD_NAMES = ("decoupled", "joint_admm", "model_based")

_TINY = 1e-30


@dataclass
class ConvergenceTrace:
    """Per-outer-iteration diagnostics; lengths all equal the iteration count."""

    primal_residual: list = field(default_factory=list)
    data_obj: list = field(default_factory=list)
    model_obj: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def append(self, primal, data_obj, model_obj, rel_change, wall_time):
        self.primal_residual.append(float(primal))
        self.data_obj.append(float(data_obj))
        self.model_obj.append(float(model_obj))
        self.rel_change.append(float(rel_change))
        self.wall_time.append(float(wall_time))

    def __len__(self) -> int:
        return len(self.primal_residual)


@dataclass
class ReconResult:
    """Recovered maps plus convergence diagnostics."""

    x0: np.ndarray
    r2star: np.ndarray
    h0: np.ndarray
    theta: MultiEchoSet
    xi: MultiEchoSet
    trace: ConvergenceTrace
    converged: bool


@dataclass(frozen=True)
class ReconMethod:
    """A reconstruction variant bound to its parameters."""

    variant: str
    params: ReconParams

    def __post_init__(self):
        if self.variant not in METHOD_NAMES:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {METHOD_NAMES}")

    def run(self, data: KSpaceData, coils: CoilSet, times: EchoTimes) -> ReconResult:
        return reconstruct(self.variant, data, coils, times, self.params)


def reconstruct(variant: str, data, coils, times, params) -> ReconResult:
    if variant == "decoupled":
        return recon_decoupled(data, coils, times, params)
    if variant == "joint_admm":
        return recon_joint_admm(data, coils, times, params)
    if variant == "model_based":
        return recon_model_based(data, coils, times, params)
    raise ValueError(f"unknown variant {variant!r}; choose from {METHOD_NAMES}")


# ----------------------------------------------------------------- helpers

def _check_inputs(data: KSpaceData, coils: CoilSet, times: EchoTimes):
    if data.n_echoes < 2:
        raise ValueError("reconstruction needs at least two echoes")
    if data.n_echoes != len(times):
        raise ValueError("echo count of data and times disagree")
    if data.n_coils != coils.n_coils:
        raise ValueError("coil count of data and maps disagree")
    if data.shape != coils.shape:
        raise ValueError("data and coil dimensions disagree")


def _zero_fill(data: KSpaceData, coils: CoilSet):
    """Coil-combined inverse FFT of the masked data: initial magnitudes/phases."""
    spec = np.fft.ifftshift(data.y, axes=(-2, -1))
    imgs = np.fft.ifft2(spec, norm="ortho")        # (E, J, rows, cols)
    comb = coil_combine(imgs, coils)               # (E, rows, cols)
    xi0 = np.abs(comb)
    theta0 = np.mod(np.angle(comb), 2.0 * np.pi)
    return theta0, xi0


def _echo_image_passes(y, ops, kappas, frame, params: ReconParams,
                       theta, xi, e, b, rho, n_passes, tol_change=None,
                       dual_state=None):
    """Alternating phase/magnitude proximal passes on the echo-image block."""
    rels = []
    for _ in range(max(1, n_passes)):
        u = xi * np.exp(1j * theta)
        q = compute_q(ops, y, u, kappas)
        theta = update_theta(q, kappas, theta)
        xi_new, dual_state = update_xi(q, kappas, theta, e, b, rho,
                                       params.lambda1, frame,
                                       params.prox_iters,
                                       dual_state=dual_state)
        rel = float(np.linalg.norm(xi_new - xi) / max(np.linalg.norm(xi), _TINY))
        rels.append(rel)
        xi = xi_new
        if tol_change is not None and rel <= tol_change:
            break
    return theta, xi, rels, dual_state


def _data_objective(y, ops, kappas, frame, lambda1, theta, xi) -> float:
    u = xi * np.exp(1j * theta)
    E, J = kappas.shape
    acc = 0.0
    for i in range(E):
        for j in range(J):
            acc += float(np.sum(np.abs(ops[i][j].forward(u[i]) - y[i, j]) ** 2))
    if lambda1 > 0:
        acc += lambda1 * float(np.sum(np.abs(frame.forward(xi))))
    return acc


def _model_objective(e, times, h0, r2star, lambda2, lambda3, frame, e_min) -> float:
    t = times.values[:, None, None]
    logs = np.log(np.maximum(e, e_min))
    acc = float(np.sum(e ** 2 * (h0[None] - t * r2star[None] - logs) ** 2))
    if lambda2 > 0:
        acc += lambda2 * float(np.sum(np.abs(frame.forward(h0))))
    if lambda3 > 0:
        acc += lambda3 * float(np.sum(np.abs(frame.forward(r2star))))
    return acc


def _resolve_e_max(params: ReconParams, xi) -> float:
    if params.e_max is not None:
        return params.e_max
    peak = float(np.max(xi))
    return max(10.0 * peak, 100.0 * params.e_min)


# ----------------------------------------------------------------- pipelines

def recon_decoupled(data: KSpaceData, coils: CoilSet, times: EchoTimes,
                    params: ReconParams) -> ReconResult:
    """Two-stage recovery: per-echo CS images, then the weighted log fit."""
    _check_inputs(data, coils, times)
    ops = build_operators(data.patterns, coils)
    kappas = estimate_kappas(ops, params.power_iters)
    frame = WaveletFrame(*data.shape)
    theta, xi = _zero_fill(data, coils)
    zeros = np.zeros_like(xi)

    trace = ConvergenceTrace()
    converged = False
    dual = None
    t_start = time.perf_counter()
    for _ in range(params.outer_iters):
        theta, xi, rels, dual = _echo_image_passes(y=data.y, ops=ops, kappas=kappas,
                                                   frame=frame, params=params,
                                                   theta=theta, xi=xi, e=zeros,
                                                   b=zeros, rho=0.0, n_passes=1,
                                                   dual_state=dual)
        now = time.perf_counter()
        trace.append(math.nan,
                     _data_objective(data.y, ops, kappas, frame,
                                     params.lambda1, theta, xi),
                     math.nan, rels[-1], now - t_start)
        t_start = now
        if rels[-1] <= params.tol_change:
            converged = True
            break

    h0, r2star = weighted_log_fit(xi, times, params.lambda2, params.lambda3,
                                  frame, iters=params.outer_iters,
                                  prox_iters=params.prox_iters,
                                  e_min=params.e_min, r_max=params.r_max)
    return ReconResult(x0=np.exp(h0), r2star=r2star, h0=h0,
                       theta=MultiEchoSet(theta, times),
                       xi=MultiEchoSet(xi, times),
                       trace=trace, converged=converged)


def recon_joint_admm(data: KSpaceData, coils: CoilSet, times: EchoTimes,
                     params: ReconParams, init: Optional[ReconResult] = None,
                     warm_start: bool = True) -> ReconResult:
    """Joint recovery via the four-block splitting with dual updates.

    By default a cheap decoupled run (a few outer iterations) provides the
    starting point; pass warm_start=False to start from the zero-filled
    images, or supply an explicit `init` result.
    """
    _check_inputs(data, coils, times)
    ops = build_operators(data.patterns, coils)
    kappas = estimate_kappas(ops, params.power_iters)
    frame = WaveletFrame(*data.shape)

    h0 = r2star = None
    if init is not None:
        theta = init.theta.images.copy()
        xi = init.xi.images.copy()
        h0 = init.h0.copy()
        r2star = init.r2star.copy()
    elif warm_start:
        warm = recon_decoupled(data, coils, times,
                               params.with_(outer_iters=min(10, params.outer_iters)))
        theta = warm.theta.images.copy()
        xi = warm.xi.images.copy()
        h0 = warm.h0.copy()
        r2star = warm.r2star.copy()
    else:
        theta, xi = _zero_fill(data, coils)

    e = xi.copy()
    b = np.zeros_like(xi)
    e_max = _resolve_e_max(params, xi)
    reduction_mode = params.rho == 0.0

    trace = ConvergenceTrace()
    converged = False
    dual = None
    t_start = time.perf_counter()
    for _ in range(params.outer_iters):
        prev_xi, prev_h0, prev_r = xi, h0, r2star

        theta, xi, _, dual = _echo_image_passes(y=data.y, ops=ops, kappas=kappas,
                                                frame=frame, params=params,
                                                theta=theta, xi=xi, e=e, b=b,
                                                rho=params.rho,
                                                n_passes=params.inner_iters,
                                                dual_state=dual)
        if reduction_mode:
            e = xi.copy()
        h0, r2star = weighted_log_fit(e, times, params.lambda2, params.lambda3,
                                      frame, iters=params.inner_iters,
                                      prox_iters=params.prox_iters,
                                      e_min=params.e_min, r_max=params.r_max,
                                      init=None if h0 is None else (h0, r2star))
        if not reduction_mode:
            e = update_e(xi, b, h0, r2star, times, params.rho,
                         params.lambda_model, params.e_min, e_max)
            b = update_dual(b, xi, e, params.rho)

        primal = float(sum(np.linalg.norm(xi[i] - e[i]) for i in range(xi.shape[0])))
        rel = float(np.linalg.norm(xi - prev_xi) / max(np.linalg.norm(prev_xi), _TINY))
        if prev_h0 is not None:
            rel = max(rel, float(np.linalg.norm(h0 - prev_h0)
                                 / max(np.linalg.norm(prev_h0), _TINY)))
            rel = max(rel, float(np.linalg.norm(r2star - prev_r)
                                 / max(np.linalg.norm(prev_r), _TINY)))
        now = time.perf_counter()
        trace.append(primal,
                     _data_objective(data.y, ops, kappas, frame,
                                     params.lambda1, theta, xi),
                     _model_objective(e, times, h0, r2star, params.lambda2,
                                      params.lambda3, frame, params.e_min),
                     rel, now - t_start)
        t_start = now
        if primal <= params.tol_primal and rel <= params.tol_change:
            converged = True
            break

    return ReconResult(x0=np.exp(h0), r2star=r2star, h0=h0,
                       theta=MultiEchoSet(theta, times),
                       xi=MultiEchoSet(xi, times),
                       trace=trace, converged=converged)


def recon_model_based(data: KSpaceData, coils: CoilSet, times: EchoTimes,
                      params: ReconParams) -> ReconResult:
    """Baseline: alternating phase updates and proximal-gradient steps on
    (x0, r2star) with sparsity on those two maps only (no multi-echo prior).

    lambda1 weighs the x0 sparsity and lambda2 the r2star sparsity, matching
    the baseline objective; lambda3/lambda_model/rho are unused here.
    """
    _check_inputs(data, coils, times)
    ops = build_operators(data.patterns, coils)
    kappas = estimate_kappas(ops, params.power_iters)
    frame = WaveletFrame(*data.shape)
    t = times.values[:, None, None]
    E, J = kappas.shape

    # neutral start, as nonlinear least-squares solvers for this model use:
    # first-echo zero-filled magnitude and a mid-range uniform rate
    theta, xi0 = _zero_fill(data, coils)
    x0 = xi0[0].copy()
    r2star = np.full(data.shape, 0.05)

    def data_grad(x0_cur, r_cur, theta_cur):
        decay = np.exp(-t * r_cur[None])
        m = x0_cur[None] * decay
        z = np.exp(1j * theta_cur)
        u = z * m
        g = np.zeros_like(m)
        resid_norm = 0.0
        for i in range(E):
            for j in range(J):
                resid = ops[i][j].forward(u[i]) - data.y[i, j]
                resid_norm += float(np.sum(np.abs(resid) ** 2))
                g[i] += 2.0 * np.real(np.conj(z[i]) * ops[i][j].adjoint(resid))
        return g, decay, resid_norm

    def lipschitz(weights, seed):
        # normal operator of the stacked linearized maps v -> A_ij z_i w_i v
        def apply(v):
            out = np.zeros_like(v)
            for i in range(E):
                for j in range(J):
                    wi = weights[i]
                    out += wi * np.real(ops[i][j].normal(wi * v))
            return out
        sig = power_iteration_norm(apply, data.shape, iters=params.power_iters,
                                   seed=seed, complex_input=False)
        return 2.0 * 1.05 * max(sig, _TINY)

    sigma2 = kappas / 2.0   # per-(echo, coil) squared operator-norm bounds

    def diag_curvature(weights):
        # pixel-wise bound: D_w A* A D_w <= sigma^2 D_w^2 for each (i, j);
        # removes the signal-scale sensitivity of a single global step size
        curv = np.zeros(data.shape)
        for i in range(E):
            curv += sigma2[i].sum() * weights[i] ** 2
        return 2.0 * curv

    def reg_term(img, lam):
        return lam * float(np.sum(np.abs(frame.forward(img)))) if lam > 0 else 0.0

    def prox_map(center, tau_eff):
        if tau_eff == 0.0:
            return center
        return fista_l1(QuadL1Problem(center, tau_eff, frame, params.prox_iters))

    trace = ConvergenceTrace()
    converged = False
    L_x0 = L_r = None
    t_start = time.perf_counter()
    for it in range(params.outer_iters):
        prev_x0, prev_r = x0, r2star

        g, decay, _ = data_grad(x0, r2star, theta)
        # phase: same closed form on the current composite images
        u = np.exp(1j * theta) * (x0[None] * decay)
        q = compute_q(ops, data.y, u, kappas)
        theta = update_theta(q, kappas, theta)

        g, decay, f_before = data_grad(x0, r2star, theta)
        grad_x0 = np.sum(g * decay, axis=0)
        if params.lambda1 > 0:
            if L_x0 is None or it % 10 == 0:
                L_x0 = lipschitz(decay, seed=1)
            steps = 1.0 / L_x0
        else:
            curv = diag_curvature(decay)
            steps = 1.0 / np.maximum(curv, 1e-6 * curv.max() + _TINY)
        for _ in range(5):
            cand = np.maximum(prox_map(x0 - steps * grad_x0,
                                       params.lambda1 * np.mean(steps)), 0.0)
            _, _, f_after = data_grad(cand, r2star, theta)
            if (f_after + reg_term(cand, params.lambda1)
                    <= f_before + reg_term(x0, params.lambda1) + 1e-12):
                break
            steps = steps * 0.5
        x0 = cand

        g, decay, f_before = data_grad(x0, r2star, theta)
        m = x0[None] * decay
        grad_r = -np.sum(t * m * g, axis=0)
        if params.lambda2 > 0:
            if L_r is None or it % 10 == 0:
                L_r = lipschitz(t * m, seed=2)
            steps = 1.0 / L_r
        else:
            curv = diag_curvature(t * m)
            steps = 1.0 / np.maximum(curv, 1e-6 * curv.max() + _TINY)
        for _ in range(5):
            cand = np.clip(prox_map(r2star - steps * grad_r,
                                    params.lambda2 * np.mean(steps)),
                           0.0, params.r_max)
            _, _, f_after = data_grad(x0, cand, theta)
            if (f_after + reg_term(cand, params.lambda2)
                    <= f_before + reg_term(r2star, params.lambda2) + 1e-12):
                break
            steps = steps * 0.5
        r2star = cand

        rel = float(np.linalg.norm(x0 - prev_x0) / max(np.linalg.norm(prev_x0), _TINY))
        rel = max(rel, float(np.linalg.norm(r2star - prev_r)
                             / max(np.linalg.norm(prev_r), _TINY)))
        _, _, f_now = data_grad(x0, r2star, theta)
        now = time.perf_counter()
        trace.append(math.nan,
                     f_now + reg_term(x0, params.lambda1) + reg_term(r2star, params.lambda2),
                     math.nan, rel, now - t_start)
        t_start = now
        if rel <= params.tol_change:
            converged = True
            break

    h0 = np.log(np.maximum(x0, params.e_min))
    xi = np.maximum(x0, params.e_min)[None] * np.exp(-t * r2star[None])
    return ReconResult(x0=np.exp(h0), r2star=r2star, h0=h0,
                       theta=MultiEchoSet(theta, times),
                       xi=MultiEchoSet(xi, times),
                       trace=trace, converged=converged)


# ----------------------------------------------------------------- tuning

@dataclass(frozen=True)
class ParamGrids:
    """Search grids for the staged tuner; every grid must be nonempty."""

    lambda1: Sequence[float]
    lambda2: Sequence[float]
    lambda3: Sequence[float]
    lambda_model: Sequence[float]
    rho: Sequence[float]

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda_model", "rho"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"empty grid for {name}")


def _map_score(result: ReconResult, phantom: Phantom) -> float:
    from .core import masked_relative_error
    r2 = masked_relative_error(phantom.r2star, result.r2star, phantom.support)
    x0 = masked_relative_error(phantom.x0, result.x0, phantom.support)
    return 0.5 * (r2 + x0)


def tune_parameters(phantom: Phantom, acq: AcquisitionSpec,
                    base_params: ReconParams, grids: ParamGrids,
                    seed: int = 0):
    """Divide-and-conquer grid search on a training slice with known truth.

    Stage 1 picks lambda1 by the echo-image error of the decoupled first
    stage; stage 2 picks (lambda2, lambda3) by the map error of the fit;
    stage 3 fixes those and picks (lambda_model, rho) by the joint result.
    Returns the tuned parameters plus the full score table.
    """
    from .core import masked_relative_error

    data = simulate_kspace(phantom, acq, seed)
    truth_xi = decay_images(phantom, acq.times).images
    table = []

    ops = build_operators(data.patterns, acq.coils)
    kappas = estimate_kappas(ops, base_params.power_iters)
    frame = WaveletFrame(*data.shape)

    best1, best1_score, best1_xi = None, math.inf, None
    for lam1 in grids.lambda1:
        p = base_params.with_(lambda1=lam1)
        theta, xi = _zero_fill(data, acq.coils)
        zeros = np.zeros_like(xi)
        theta, xi, _, _ = _echo_image_passes(data.y, ops, kappas, frame, p,
                                             theta, xi, zeros, zeros, 0.0,
                                             n_passes=p.outer_iters,
                                             tol_change=p.tol_change)
        err = float(np.mean([
            masked_relative_error(truth_xi[i], xi[i], phantom.support)
            for i in range(xi.shape[0])]))
        table.append(("stage1", {"lambda1": lam1}, err))
        if err < best1_score:
            best1, best1_score, best1_xi = lam1, err, xi

    best23, best23_score = None, math.inf
    for lam2 in grids.lambda2:
        for lam3 in grids.lambda3:
            p = base_params.with_(lambda1=best1, lambda2=lam2, lambda3=lam3)
            h0, r2 = weighted_log_fit(best1_xi, acq.times, lam2, lam3, frame,
                                      iters=p.outer_iters, prox_iters=p.prox_iters,
                                      e_min=p.e_min, r_max=p.r_max)
            err = 0.5 * (masked_relative_error(phantom.r2star, r2, phantom.support)
                         + masked_relative_error(phantom.x0, np.exp(h0), phantom.support))
            table.append(("stage2", {"lambda2": lam2, "lambda3": lam3}, err))
            if err < best23_score:
                best23, best23_score = (lam2, lam3), err

    best_joint, best_joint_score = None, math.inf
    for lam in grids.lambda_model:
        for rho in grids.rho:
            p = base_params.with_(lambda1=best1, lambda2=best23[0],
                                  lambda3=best23[1], lambda_model=lam, rho=rho)
            res = recon_joint_admm(data, acq.coils, acq.times, p)
            err = _map_score(res, phantom)
            table.append(("stage3", {"lambda_model": lam, "rho": rho}, err))
            if err < best_joint_score:
                best_joint, best_joint_score = (lam, rho), err

    tuned = base_params.with_(lambda1=best1, lambda2=best23[0], lambda3=best23[1],
                              lambda_model=best_joint[0], rho=best_joint[1])
    return tuned, table


# ----------------------------------------------------------------- checks

@dataclass(frozen=True)
class PreconditionReport:
    """Advisory convergence preconditions; all must hold for the guarantees."""

    enough_echoes: bool
    has_coils: bool
    nonempty_patterns: tuple

    @property
    def passed(self) -> bool:
        return self.enough_echoes and self.has_coils and all(self.nonempty_patterns)


def check_convergence_preconditions(data: KSpaceData, times: EchoTimes) -> PreconditionReport:
    nonempty = tuple(bool(p.mask.sum() > 0) for p in data.patterns.patterns)
    return PreconditionReport(
        enough_echoes=data.n_echoes >= 2 and len(times) == data.n_echoes,
        has_coils=data.n_coils >= 1,
        nonempty_patterns=nonempty,
    )
