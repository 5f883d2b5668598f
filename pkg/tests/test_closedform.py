import math

import numpy as np
import pytest

from hardylab.closedform import (A_SAMPLES, BarrierParams, OperatorSpec, barrier_norm_divergence,
                                 barrier_sign_scan, halfspace_constant, ly_residual_fd, lyoak_rhs,
                                 lyoak_residual_fd, observed_order, omega, omega_bar,
                                 sector_hardy_constant, x_weight)
from hardylab.geometry import FermiChart


def test_x_weight_examples():
    assert x_weight(2, math.exp(-1)) == pytest.approx(1.0)
    assert x_weight(-2, math.exp(-2)) == pytest.approx(0.25)
    assert x_weight(0, 0.37) == 1.0
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            x_weight(1, bad)


def test_omega_bar_examples():
    assert omega_bar(-0.3, 2, [[math.exp(-1), 0.0]])[0] == pytest.approx(1.0)
    assert omega_bar(-1, 2, [[math.exp(-2), 0.0]])[0] == pytest.approx(0.5)
    v = omega_bar(-0.75, 2, [[1e-4, 0.5], [2e-4, 0.5]])
    assert v[1] / v[0] == pytest.approx(2.0, rel=1e-6)


def test_omega_examples():
    y = np.array([[0.2, 0.1], [0.05, -0.3]])
    np.testing.assert_array_equal(omega(-0.75, 0.0, 2, y), omega_bar(-0.75, 2, y))
    assert omega(-0.5, 1.0, 2, [[math.exp(-1), 0.0]])[0] == pytest.approx(1.4446678610097661)
    assert np.all(omega(-0.75, 2.0, 2, y) > omega(-0.75, 1.0, 2, y))


def test_ly_residual_order_two():
    y = np.array([[0.2, 0.1]])
    r1 = abs(ly_residual_fd(-0.75, 2, y, 1e-3)[0])
    r2 = abs(ly_residual_fd(-0.75, 2, y, 5e-4)[0])
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)


def test_ly_residual_small_for_a_zero():
    assert abs(ly_residual_fd(0.0, 2, [[0.3, 0.0]], 1e-4)[0]) < 1e-6


def test_ly_residual_stencil_must_stay_inside():
    with pytest.raises(ValueError):
        ly_residual_fd(-0.75, 2, [[0.001, 0.1]], 0.05)


def test_lyoak_rhs_vanishes_without_drift():
    y = np.array([[0.2, 0.1], [0.4, -0.3]])
    np.testing.assert_array_equal(lyoak_rhs(-0.75, 0.0, 2, y), 0.0)


def test_lyoak_residual_small_and_quartering():
    y = np.array([[0.2, 0.1]])
    r1 = abs(lyoak_residual_fd(-0.75, 1.0, 2, y, 1e-3)[0])
    r2 = abs(lyoak_residual_fd(-0.75, 1.0, 2, y, 5e-4)[0])
    assert r1 < 1e-4
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)


def test_lyoak_rhs_finite_boundary_limit():
    K, a = 1.0, -0.75
    vals = [lyoak_rhs(a, K, 2, [[e, 0.3]])[0] for e in (1e-4, 1e-6, 1e-8)]
    rho = 0.3
    limit = -2 * K * rho ** -1 * abs(math.log(rho)) ** a
    assert vals[-1] == pytest.approx(limit, rel=1e-6)


@pytest.mark.parametrize("a", [-0.6, -0.9])
def test_residual_scaled_by_h2_bounded(a):
    rng = np.random.default_rng(5)
    rho = rng.uniform(0.15, 0.6, 20)
    phi = rng.uniform(-1.1, 1.1, 20)
    y = np.stack([rho * np.cos(phi), rho * np.sin(phi)], 1)
    for h in (2e-3, 1e-3):
        assert np.max(np.abs(ly_residual_fd(a, 2, y, h)) / h ** 2) < 1e3


def test_observed_order_helper():
    assert observed_order(lambda h: 3 * h ** 2, 0.1) == pytest.approx(2.0)


def test_sign_scan_flat_matches_closed_form():
    # on the plane, L w / w = -a(a-1)/(|y|^2 log^2|y|) for lam = 0, K = 0
    a = -0.75
    s = barrier_sign_scan(BarrierParams(a, 0.0), OperatorSpec(lam=0.0), FermiChart("plane"), 0.3,
                          grid=32)
    r = np.linalg.norm(s.argmax)
    expected = -a * (a - 1) / (r ** 2 * math.log(r) ** 2)
    assert s.max_ratio == pytest.approx(expected, rel=1e-5, abs=1e-6)
    assert s.admissible


def test_sign_scan_sphere_interior_small_radius():
    ch = FermiChart("sphere_interior")
    s = barrier_sign_scan(BarrierParams(-0.75, 1.0), OperatorSpec(lam=1.0), ch, 0.05, grid=64)
    assert s.admissible


def test_sign_scan_large_radius_reports_violations():
    ch = FermiChart("sphere_interior")
    s = barrier_sign_scan(BarrierParams(-0.51, 1.0), OperatorSpec(lam=1.0), ch, 0.4, grid=64)
    assert not s.admissible
    assert len(s.violations) > 0


def test_sign_scan_admissibility_monotone_in_r():
    ch = FermiChart("sphere_interior")
    for a in A_SAMPLES:
        flags = [barrier_sign_scan(BarrierParams(a, 1.0), OperatorSpec(lam=1.0), ch, r).admissible
                 for r in (0.4, 0.2, 0.1, 0.05)]
        first = flags.index(True) if True in flags else len(flags)
        assert all(flags[first:])


def test_norm_divergence_growth_toward_minus_half():
    r = math.exp(-4)
    v_near, v_far = barrier_norm_divergence(-0.51, 2, [r])[0], barrier_norm_divergence(-0.9, 2, [r])[0]
    assert v_near >= 50 * v_far


def test_norm_divergence_bounded_ratio_against_log_power():
    a = -0.75
    rs = [0.3, 0.1, 0.01, 1e-4]
    vals = barrier_norm_divergence(a, 2, rs)
    ratios = vals / np.abs(np.log(rs)) ** (2 * a + 1)
    assert np.all(ratios > 0)
    assert ratios.max() / ratios.min() < 3


def test_norm_divergence_flat_leading_term():
    # with K=0 the integral is (pi/2) * s0^(2a+1) / |2a+1| exactly
    a, r = -0.75, 0.05
    s0 = -math.log(r)
    v = barrier_norm_divergence(a, 2, [r], K=0.0)[0]
    assert v == pytest.approx(math.pi / 2 * s0 ** (2 * a + 1) / abs(2 * a + 1), rel=1e-8)


def test_oracle_constants():
    assert sector_hardy_constant(math.pi) == 1.0 == halfspace_constant(2, 0)
    assert sector_hardy_constant(math.pi / 2) == pytest.approx(4.0)
    assert sector_hardy_constant(2 * math.pi) == pytest.approx(0.25)
    assert halfspace_constant(3, 1) == 1.0
    with pytest.raises(ValueError):
        halfspace_constant(2, 2)
    with pytest.raises(ValueError):
        sector_hardy_constant(0.0)


def test_closed_form_bit_identical():
    y = np.array([[0.2, 0.1]])
    assert lyoak_residual_fd(-0.6, 1.0, 2, y, 1e-3).tobytes() == \
        lyoak_residual_fd(-0.6, 1.0, 2, y, 1e-3).tobytes()
