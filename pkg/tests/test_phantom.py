import numpy as np
import pytest

import relaxcs as rc
from relaxcs.phantom import PRESETS, Phantom, coil_combine
from relaxcs.sampling import EchoPatternSet, SamplingPattern


def _flat_phantom(n, times, x0val=1.0, r2val=0.0):
    support = np.ones((n, n))
    x0 = np.full((n, n), x0val)
    r2 = np.full((n, n), r2val)
    theta = rc.MultiEchoSet(np.zeros((len(times), n, n)), times)
    return Phantom(x0=x0, r2star=r2, theta=theta, support=support)


def test_decay_images_no_relaxation():
    times = rc.EchoTimes(np.array([1.0, 2.0, 3.0]))
    ph = _flat_phantom(8, times, x0val=0.7)
    xi = rc.decay_images(ph, times)
    for i in range(3):
        assert np.allclose(xi.images[i], 0.7)


def test_decay_images_hand_value():
    times = rc.EchoTimes(np.array([1.0, 2.0]))
    ph = _flat_phantom(4, times, x0val=4.0, r2val=np.log(2.0))
    xi = rc.decay_images(ph, times)
    assert np.allclose(xi.images[0], 2.0)
    assert np.allclose(xi.images[1], 1.0)


def test_decay_monotone_to_zero():
    times = rc.EchoTimes(np.array([5.0, 50.0, 500.0]))
    ph = _flat_phantom(4, times, x0val=1.0, r2val=0.1)
    xi = rc.decay_images(ph, times).images
    assert np.all(xi[0] > xi[1])
    assert np.all(xi[1] > xi[2])
    assert np.max(xi[2]) < 1e-10


def test_simulate_roundtrip_single_unit_coil():
    n = 32
    times = rc.EchoTimes(np.array([2.0, 4.0]))
    ph = _flat_phantom(n, times, x0val=0.0)
    x0 = np.zeros((n, n)); x0[8:24, 10:20] = 0.8
    ph = Phantom(x0=x0, r2star=np.full((n, n), 0.05) * (x0 > 0), theta=ph.theta,
                 support=(x0 > 0).astype(float))
    coils = rc.CoilSet(np.ones((1, n, n), dtype=complex))
    pats = rc.make_echo_patterns(2, "fixed", n, n, 1.0, 0.0, 0, seed=0)
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=pats, noise_sigma=0.0)
    data = rc.simulate_kspace(ph, acq, seed=0)
    xi = rc.decay_images(ph, times).images
    for i in range(2):
        img = np.fft.ifft2(np.fft.ifftshift(data.y[i, 0]), norm="ortho")
        assert np.max(np.abs(img - xi[i])) <= 1e-9


def test_simulate_empty_pattern_zero_measurements():
    n = 16
    times = rc.EchoTimes(np.array([2.0, 4.0]))
    ph = _flat_phantom(n, times, x0val=0.5)
    coils = rc.synth_coils(n, n, 2)
    empty = SamplingPattern(np.zeros((n, n)), 0.0, 1.0, 0, 0)
    full = SamplingPattern(np.ones((n, n)), 0.0, 1.0, 0, 0)
    pats = EchoPatternSet((full, empty), "complementary")
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=pats, noise_sigma=0.1)
    data = rc.simulate_kspace(ph, acq, seed=1)
    assert np.any(data.y[0] != 0)
    assert np.all(data.y[1] == 0)


def test_simulate_deterministic_per_seed():
    times = rc.default_echo_times(3)
    ph = rc.make_phantom(24, 24, "blocks", seed=0, times=times)
    coils = rc.synth_coils(24, 24, 2)
    pats = rc.make_echo_patterns(3, "fixed", 24, 24, 0.4, 0.0, 2, seed=0)
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=pats, noise_sigma=0.05)
    a = rc.simulate_kspace(ph, acq, seed=42)
    b = rc.simulate_kspace(ph, acq, seed=42)
    c = rc.simulate_kspace(ph, acq, seed=43)
    assert np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_conjugate_coil_combination_inverts_full_sampling():
    n = 24
    times = rc.default_echo_times(2)
    ph = rc.make_phantom(n, n, "shepp-like", seed=2, times=times)
    coils = rc.synth_coils(n, n, 3)
    pats = rc.make_echo_patterns(2, "fixed", n, n, 1.0, 0.0, 0, seed=0)
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=pats, noise_sigma=0.0)
    data = rc.simulate_kspace(ph, acq, seed=0)
    imgs = np.fft.ifft2(np.fft.ifftshift(data.y, axes=(-2, -1)), norm="ortho")
    comb = coil_combine(imgs, coils)
    expected = rc.decay_images(ph, times).images * np.exp(1j * ph.theta.images)
    assert np.max(np.abs(comb - expected)) <= 1e-9


def test_synth_coils_properties():
    coils = rc.synth_coils(48, 48, 4)
    assert coils.n_coils == 4
    rng = np.random.default_rng(0)
    idx = rng.integers(0, 48, size=(1000, 2))
    rss = coils.rss()
    assert np.all(rss[idx[:, 0], idx[:, 1]] > 0)
    for j in range(4):
        for k in range(j + 1, 4):
            assert not np.allclose(coils.maps[j], coils.maps[k])
    single = rc.synth_coils(48, 48, 1)
    mag = np.abs(single.maps[0])
    peak = np.unravel_index(np.argmax(mag), mag.shape)
    assert abs(peak[0] - 24) <= 2 and abs(peak[1] - 24) <= 2
    with pytest.raises(ValueError):
        rc.synth_coils(16, 16, 0)


def test_truncate_echoes():
    times = rc.default_echo_times(6)
    ph = rc.make_phantom(16, 16, "blocks", seed=1, times=times)
    xi = rc.decay_images(ph, times)
    assert rc.truncate_echoes(xi, 6) .n_echoes == 6
    cut = rc.truncate_echoes(xi, 2)
    assert cut.n_echoes == 2
    assert np.allclose(cut.times.values, [7.64, 13.05])
    with pytest.raises(ValueError):
        rc.truncate_echoes(xi, 1)
    coils = rc.synth_coils(16, 16, 2)
    pats = rc.make_echo_patterns(6, "fixed", 16, 16, 0.5, 0.0, 2, seed=0)
    acq = rc.AcquisitionSpec(times=times, coils=coils, patterns=pats, noise_sigma=0.0)
    data = rc.simulate_kspace(ph, acq, seed=0)
    cutk = rc.truncate_echoes(data, 3)
    assert cutk.n_echoes == 3
    assert np.array_equal(cutk.y, data.y[:3])
    with pytest.raises(TypeError):
        rc.truncate_echoes([1, 2, 3], 2)


@pytest.mark.parametrize("preset", PRESETS)
def test_make_phantom_properties(preset):
    times = rc.default_echo_times(4)
    ph = rc.make_phantom(64, 64, preset, seed=5, times=times)
    frac = ph.support.mean()
    assert 0.2 < frac < 0.8
    on = ph.support > 0
    assert np.all(ph.x0[~on] == 0)
    assert np.all(ph.r2star[on] >= 0.01 - 1e-12)
    assert np.all(ph.r2star[on] <= 0.2 + 1e-12)
    assert np.all(ph.x0[on] > 0)
    assert np.all((ph.theta.images >= 0) & (ph.theta.images < 2 * np.pi))
    again = rc.make_phantom(64, 64, preset, seed=5, times=times)
    assert np.array_equal(ph.x0, again.x0)
    assert np.array_equal(ph.r2star, again.r2star)


def test_blocks_has_three_rate_levels():
    times = rc.default_echo_times(3)
    ph = rc.make_phantom(40, 40, "blocks", seed=0, times=times)
    levels = np.unique(ph.r2star[ph.support > 0])
    assert len(levels) >= 3


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        rc.make_phantom(16, 16, "mandelbrot", seed=0)


def test_weighted_log_loss_approximates_nonlinear_loss():
    # same-draw comparison across shrinking perturbation scales
    rng = np.random.default_rng(7)
    t = np.array([7.64, 13.05, 18.46, 23.87])
    x0, r2 = 0.9, 0.04
    clean = x0 * np.exp(-t * r2)
    u = rng.uniform(-1.0, 1.0, size=t.shape)
    gaps = []
    for scale in (0.05, 0.02, 0.01):
        p = scale * u
        x = clean / (1.0 + p)
        weighted_log = np.sum(x ** 2 * (np.log(x0) - t * r2 - np.log(x)) ** 2)
        nonlinear = np.sum((clean - x) ** 2)
        gaps.append(abs(weighted_log - nonlinear) / nonlinear)
    assert gaps[0] <= 0.1
    assert gaps[1] <= 0.05
    assert gaps[2] <= gaps[1] <= gaps[0]
