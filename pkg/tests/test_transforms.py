import numpy as np
import pytest

import relaxcs as rc
from relaxcs.sampling import poisson_disk
from relaxcs.transforms import SamplingOperator, WaveletFrame, soft_threshold


def _random_operator(rate, seed, n=32):
    pattern = poisson_disk(n, n, rate, 0.0, calib_radius=2, seed=seed)
    rng = np.random.default_rng(seed + 100)
    coil = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    coil = 0.2 + np.abs(coil) * np.exp(1j * rng.standard_normal((n, n)))
    return SamplingOperator(pattern.mask, coil)


def test_forward_impulse_flat_spectrum():
    n = 16
    op = SamplingOperator(np.ones((n, n)), np.ones((n, n), dtype=complex))
    u = np.zeros((n, n), dtype=complex)
    u[0, 0] = 1.0
    spec = op.forward(u)
    assert np.allclose(np.abs(spec), 1.0 / n)


def test_empty_pattern_zero():
    n = 8
    op = SamplingOperator(np.zeros((n, n)), np.ones((n, n), dtype=complex))
    rng = np.random.default_rng(0)
    u = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    assert np.all(op.forward(u) == 0)
    assert np.all(op.adjoint(u) == 0)


def test_full_sampling_unit_coil_isometry():
    n = 32
    op = SamplingOperator(np.ones((n, n)), np.ones((n, n), dtype=complex))
    rng = np.random.default_rng(3)
    u = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    assert rc.image_linf_diff(op.adjoint(op.forward(u)), u) <= 1e-10


@pytest.mark.parametrize("rate", [0.1, 0.3, 1.0])
def test_adjoint_identity(rate):
    op = _random_operator(rate, seed=7)
    rng = np.random.default_rng(11)
    for _ in range(10):
        u = rng.standard_normal(op.shape) + 1j * rng.standard_normal(op.shape)
        v = rng.standard_normal(op.shape) + 1j * rng.standard_normal(op.shape)
        lhs = np.vdot(v, op.forward(u))
        rhs = np.vdot(op.adjoint(v), u)
        assert abs(lhs - rhs) <= 1e-9 * np.linalg.norm(u) * np.linalg.norm(v)


def test_operator_shape_validation():
    op = _random_operator(0.5, seed=1)
    with pytest.raises(ValueError):
        op.forward(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        SamplingOperator(np.ones((4, 4)), np.ones((5, 5), dtype=complex))


def test_frame_zero_maps_to_zero(frame64):
    c = frame64.forward(np.zeros((64, 64)))
    assert np.all(c == 0)
    assert np.all(frame64.adjoint(np.zeros(frame64.n_coeffs)) == 0)
    assert c.size == 8 * 64 * 64


def test_frame_tight_and_parseval(frame64):
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.standard_normal((64, 64))
        c = frame64.forward(x)
        assert abs(np.linalg.norm(c) - np.linalg.norm(x)) <= 1e-10 * np.linalg.norm(x)
        back = frame64.adjoint(c)
        assert np.max(np.abs(back - x)) <= 1e-10 * np.max(np.abs(x))


def test_frame_single_member_orthonormal():
    fr = WaveletFrame(32, 32, orders=(1,), levels=3)
    assert fr.scale == 1.0
    rng = np.random.default_rng(8)
    x = rng.standard_normal((32, 32))
    c = fr.forward(x)
    assert abs(np.linalg.norm(c) - np.linalg.norm(x)) <= 1e-10 * np.linalg.norm(x)
    assert np.max(np.abs(fr.adjoint(c) - x)) <= 1e-12 * np.max(np.abs(x))


def test_frame_piecewise_constant_haar_sparsity(frame64):
    img = np.zeros((64, 64))
    img[16:48, 20:44] = 1.0
    c = frame64.forward(img)
    member0 = c[: 64 * 64]  # Db1 block of the concatenation
    nonzppo = int(np.sum(np.abs(member0) > 1e-9))
    # axis-aligned edges keep Haar detail support near the edges only
    assert nonzppo <= 12 * (64 + 64)


def test_frame_padding_roundtrip():
    fr = WaveletFrame(50, 38, levels=4)
    rng = np.random.default_rng(13)
    x = rng.standard_normal((50, 38))
    back = fr.adjoint(fr.forward(x))
    assert np.max(np.abs(back - x)) <= 1e-10 * np.max(np.abs(x))


def test_frame_coefficient_length_check(frame64):
    with pytest.raises(ValueError):
        frame64.adjoint(np.zeros(10))
    with pytest.raises(ValueError):
        frame64.forward(np.zeros((32, 32)))


def test_soft_threshold_values():
    assert soft_threshold(np.array([3.0]), 1.0)[0] == pytest.approx(2.0)
    assert soft_threshold(np.array([-0.5]), 1.0)[0] == 0.0
    c = np.array([-2.0, 0.3, 5.0])
    assert np.allclose(soft_threshold(c, 0.0), c)
    with pytest.raises(ValueError):
        soft_threshold(c, -0.1)


def test_soft_threshold_is_prox_minimizer():
    # sign(c) max(|c|-tau, 0) must minimize 0.5 (z-c)^2 + tau |z| per entry
    zs = np.linspace(-4, 4, 8001)
    for c in (-2.3, -0.4, 0.0, 0.9, 3.1):
        for tau in (0.0, 0.5, 1.7):
            star = float(soft_threshold(np.array([c]), tau)[0])
            obj = 0.5 * (zs - c) ** 2 + tau * np.abs(zs)
            obj_star = 0.5 * (star - c) ** 2 + tau * abs(star)
            assert obj_star <= obj.min() + 1e-6
