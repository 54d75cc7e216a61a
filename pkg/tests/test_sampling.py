import numpy as np
import pytest

from relaxcs.sampling import (EchoPatternSet, InfeasibleRateError, calibration_box,
                              make_echo_patterns, min_distance_violations,
                              poisson_disk)


def test_uniform_special_case_rate():
    p = poisson_disk(64, 64, 0.3, 0.0, calib_radius=0, seed=4)
    assert abs(p.rate - 0.3) <= 0.1 * 0.3
    assert min_distance_violations(p) == 0


def test_full_rate_full_mask():
    p = poisson_disk(16, 16, 1.0, 0.0, calib_radius=0, seed=0)
    assert p.rate == 1.0
    assert np.all(p.mask == 1.0)


def test_min_distance_enforced_exhaustively():
    p = poisson_disk(96, 96, 0.12, 2.0, calib_radius=8, seed=5)
    assert min_distance_violations(p) == 0
    assert abs(p.rate - 0.12) <= 0.1 * 0.12
    # brute-force double check on the non-calibration samples
    mask = p.mask.astype(bool)
    rs, cs = calibration_box(96, 96, 8)
    pts_mask = mask.copy()
    pts_mask[rs, cs] = False
    pts = np.argwhere(pts_mask)
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, 10 ** 9)
    assert d2.min() >= 4


def test_calibration_region_fully_sampled():
    p = poisson_disk(64, 64, 0.1, 2.0, calib_radius=6, seed=2)
    rs, cs = calibration_box(64, 64, 6)
    assert np.all(p.mask[rs, cs] == 1.0)


def test_determinism_per_seed():
    a = poisson_disk(64, 64, 0.15, 2.0, calib_radius=4, seed=9)
    b = poisson_disk(64, 64, 0.15, 2.0, calib_radius=4, seed=9)
    assert np.array_equal(a.mask, b.mask)
    c = poisson_disk(64, 64, 0.15, 2.0, calib_radius=4, seed=10)
    assert not np.array_equal(a.mask, c.mask)


def test_infeasible_rate_rejected_with_bound():
    # a packing with min distance 2 saturates near 19% of the grid
    with pytest.raises(InfeasibleRateError) as exc:
        poisson_disk(128, 128, 0.5, 2.0, calib_radius=4, seed=1)
    assert 0.0 < exc.value.achievable_rate < 0.5


def test_rate_monotlocal_calibration_persists():
    for rate in (0.05, 0.1, 0.2):
        p = poisson_disk(64, 64, rate, 0.0, calib_radius=5, seed=3)
        rs, cs = calibration_box(64, 64, 5)
        assert np.all(p.mask[rs, cs] == 1.0)


def test_validation_errors():
    with pytest.raises(ValueError):
        poisson_disk(32, 32, 0.0, 0.0, 0, 0)
    with pytest.raises(ValueError):
        poisson_disk(32, 32, 1.5, 0.0, 0, 0)
    with pytest.raises(ValueError):
        poisson_disk(32, 32, 0.5, -1.0, 0, 0)


def test_echo_patterns_fixed_identical():
    eset = make_echo_patterns(6, "fixed", 48, 48, 0.2, 0.0, 4, seed=7)
    assert len(eset.patterns) == 6
    for p in eset.patterns[1:]:
        assert np.array_equal(p.mask, eset.patterns[0].mask)
    assert eset.union_count() == int(eset.patterns[0].mask.sum())


def test_echo_patterns_single_echo_schemes_agree():
    a = make_echo_patterns(1, "fixed", 32, 32, 0.3, 0.0, 2, seed=5)
    b = make_echo_patterns(1, "complementary", 32, 32, 0.3, 0.0, 2, seed=5)
    assert np.array_equal(a.patterns[0].mask, b.patterns[0].mask)


def test_echo_patterns_complementary_coverage():
    eset = make_echo_patterns(4, "complementary", 64, 64, 0.1, 0.0, 4, seed=11)
    single = int(eset.patterns[0].mask.sum())
    union = eset.union_count()
    assert union > single
    assert union <= 4 * single
    # and with the distance constraint active
    eset2 = make_echo_patterns(4, "complementary", 64, 64, 0.1, 2.0, 4, seed=11)
    for p in eset2.patterns:
        assert min_distance_violations(p) == 0
    assert eset2.union_count() > int(eset2.patterns[0].mask.sum())


def test_echo_pattern_set_validation():
    p = poisson_disk(16, 16, 0.5, 0.0, 0, 0)
    with pytest.raises(ValueError):
        EchoPatternSet((p,), "diagonal")
    with pytest.raises(ValueError):
        EchoPatternSet((), "fixed")
    with pytest.raises(ValueError):
        make_echo_patterns(0, "fixed", 16, 16, 0.5, 0.0, 0, 0)
