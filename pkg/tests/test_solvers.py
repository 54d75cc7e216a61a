import numpy as np
import pytest

import relaxcs as rc
from relaxcs.solvers import (Monotone1D, QuadL1Problem, bisect_root, fista_l1,
                             global_min_1d_e, global_min_1d_e_batch,
                             power_iteration_norm)
from relaxcs.transforms import WaveletFrame


def _ell(d, x, w, b, rho, lam):
    ed = np.exp(d)
    return 0.5 * rho * (x - ed) ** 2 + lam * np.exp(2 * d) * (d - w) ** 2 + b * (x - ed)


def test_fista_tau_zero_returns_center(frame64):
    rng = np.random.default_rng(0)
    v = rng.standard_normal((64, 64))
    out = fista_l1(QuadL1Problem(v, 0.0, frame64, iters=5))
    assert np.array_equal(out, v)


def test_fista_full_shrinkage_single_member():
    fr = WaveletFrame(16, 16, orders=(1,), levels=2)
    rng = np.random.default_rng(1)
    v = rng.standard_normal((16, 16))
    tau = float(np.max(np.abs(fr.forward(v)))) + 0.1
    out = fista_l1(QuadL1Problem(v, tau, fr, iters=200))
    assert np.max(np.abs(out)) <= 1e-8


def test_fista_never_worse_than_center(frame64):
    rng = np.random.default_rng(2)
    v = rng.standard_normal((64, 64))
    prob = QuadL1Problem(v, 0.05, frame64, iters=30)
    out = fista_l1(prob)
    assert prob.objective(out) <= prob.objective(v) + 1e-12


@pytest.mark.slow
def test_fista_matches_convex_oracle():
    cvxpy = pytest.importorskip("cvxpy")
    n = 8
    fr = WaveletFrame(n, n, levels=2)
    rng = np.random.default_rng(3)
    v = rng.standard_normal((n, n))
    tau = 0.15
    # materialize Phi as an explicit matrix for the oracle
    basis = np.eye(n * n)
    phi = np.stack([fr.forward(e.reshape(n, n)) for e in basis], axis=1)
    x = cvxpy.Variable(n * n)
    obj = 0.5 * cvxpy.sum_squares(x - v.ravel()) + tau * cvxpy.norm1(phi @ x)
    cvxpy.Problem(cvxpy.Minimize(obj)).solve(solver="CLARABEL")
    oracle_val = float(obj.value)
    prob = QuadL1Problem(v, tau, fr, iters=3000, tol=1e-14)
    out = fista_l1(prob)
    assert prob.objective(out) <= oracle_val + 1e-6


def test_power_iteration_identity_and_diagonal():
    assert power_iteration_norm(lambda v: v, (8, 8), iters=20) == pytest.approx(1.0)
    diag = np.ones((4, 4))
    diag[0, 0] = 9.0  # A*A with singular values {3, 1}
    est = power_iteration_norm(lambda v: diag * v, (4, 4), iters=200)
    assert est == pytest.approx(3.0, rel=1e-3)
    assert power_iteration_norm(lambda v: 0 * v, (4, 4)) == 0.0


def test_power_iteration_masked_fft_bounded():
    pat = rc.poisson_disk(32, 32, 0.3, 0.0, calib_radius=3, seed=0)
    op = rc.SamplingOperator(pat.mask, np.ones((32, 32), dtype=complex))
    est = power_iteration_norm(op.normal, (32, 32), iters=60)
    assert est <= 1.0 + 1e-6


def test_bisect_root_cases():
    assert bisect_root(Monotone1D(lambda d: d - 1.0, 0.0, 2.0, 1e-12)) == pytest.approx(1.0)
    assert bisect_root(Monotone1D(lambda d: np.exp(d) - 2.0, 0.0, 1.0, 1e-12)) == pytest.approx(np.log(2.0))
    assert bisect_root(Monotone1D(lambda d: d + 5.0, 0.0, 1.0)) is None
    with pytest.raises(ValueError):
        bisect_root(Monotone1D(lambda d: d, 1.0, 0.0))


def test_bisect_on_monotone_pieces_of_l1():
    # split l1 at the l2 roots and compare bisection roots to a dense grid
    x, w, b, rho, lam = 0.8, -0.5, 0.3, 2.0, 1.5
    d_lo, d_hi = -6.0, 2.0

    def l1(d):
        ed = np.exp(d)
        return rho * (ed - x) + 2 * lam * ed * (d - w) + 2 * lam * ed * (d - w) ** 2 - b

    a2, a1 = 2 * lam, 6 * lam - 4 * lam * w
    a0 = rho + 2 * lam + 2 * lam * w ** 2 - 6 * lam * w
    disc = a1 * a1 - 4 * a2 * a0
    breaks = [d_lo, d_hi]
    if disc > 0:
        breaks += [r for r in ((-a1 - np.sqrt(disc)) / (2 * a2),
                               (-a1 + np.sqrt(disc)) / (2 * a2)) if d_lo < r < d_hi]
    grid = np.linspace(d_lo, d_hi, 400001)
    vals = l1(grid)
    sign_flips = grid[np.nonzero(np.diff(np.sign(vals)))[0]]
    roots = []
    for lo, hi in zip(sorted(breaks)[:-1], sorted(breaks)[1:]):
        r = bisect_root(Monotone1D(l1, lo, hi, 1e-12))
        if r is not None:
            roots.append(r)
    assert len(roots) == len(sign_flips)
    for r in roots:
        assert np.min(np.abs(sign_flips - r)) < 1e-4


def test_global_min_lambda_zero_is_log_clamp():
    d, v = global_min_1d_e(x=1.5, w=0.0, b=0.0, rho=2.0, lam=0.0, d_lo=-6.0, d_hi=2.0)
    assert d == pytest.approx(np.log(1.5), abs=1e-8)
    # clamps when log x leaves the interval
    d, v = global_min_1d_e(x=20.0, w=0.0, b=0.0, rho=2.0, lam=0.0, d_lo=-6.0, d_hi=2.0)
    assert d == pytest.approx(2.0)


def test_global_min_rho_zero_sits_at_target():
    d, v = global_min_1d_e(x=1.0, w=-0.7, b=0.0, rho=0.0, lam=3.0, d_lo=-6.0, d_hi=2.0)
    assert d == pytest.approx(-0.7, abs=1e-6)
    assert v <= 1e-12


def test_global_min_beats_dense_grid():
    rng = np.random.default_rng(4)
    n = 150
    xs = rng.uniform(0.01, 2, n)
    ws = rng.uniform(-3, 1, n)
    bs = rng.uniform(-1, 1, n)
    rhos = rng.uniform(0.1, 10, n)
    lams = rng.uniform(0.01, 10, n)
    d_lo, d_hi = -6.0, 2.0
    grid = np.arange(d_lo, d_hi + 1e-4, 1e-4)
    for i in range(n):
        d, v = global_min_1d_e(xs[i], ws[i], bs[i], rhos[i], lams[i], d_lo, d_hi)
        grid_min = float(np.min(_ell(grid, xs[i], ws[i], bs[i], rhos[i], lams[i])))
        assert v <= grid_min + 1e-8
        assert d_lo <= d <= d_hi


def test_global_min_batch_matches_scalar():
    rng = np.random.default_rng(5)
    n = 300
    xs = rng.uniform(0.01, 2, n)
    ws = rng.uniform(-3, 1, n)
    bs = rng.uniform(-1, 1, n)
    rho, lam = 1.7, 0.8
    db = global_min_1d_e_batch(xs, ws, bs, rho, lam, -6.0, 2.0)
    for i in range(n):
        ds, vs = global_min_1d_e(xs[i], ws[i], bs[i], rho, lam, -6.0, 2.0)
        vb = _ell(db[i], xs[i], ws[i], bs[i], rho, lam)
        assert vb <= vs + 1e-9


def test_global_min_validates_inputs():
    with pytest.raises(ValueError):
        global_min_1d_e(1.0, 0.0, 0.0, 1.0, 1.0, 2.0, -2.0)
    with pytest.raises(ValueError):
        global_min_1d_e(1.0, 0.0, 0.0, -1.0, 1.0, -2.0, 2.0)
