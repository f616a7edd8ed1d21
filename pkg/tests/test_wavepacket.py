import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgescatter.minkowski import boost, compose, identity, omega, rotation, shell_map
from wedgescatter.wavepacket import (WavePacket, adapted_velocity_support, boost_packet, bump,
                                     decay_profile, evaluate_kg, fit_loglog_slope, l1_norm,
                                     modified_packet, uniform_axis, velocity_support)


def line_packet(center=0.0, width=1.0, n=257, half=1.5, sharpness=1.0):
    return WavePacket.bump_packet([center], width, 1.0, (uniform_axis(-half, half, n),), sharpness=sharpness)


def plane_packet(center=(0.0, 0.0), width=0.8, n=97, half=1.3):
    ax = uniform_axis(-half, half, n)
    return WavePacket.bump_packet(list(center), width, 1.0, (ax, ax))


def test_bump_profile():
    assert bump(np.array([0.0]))[0] == pytest.approx(np.exp(-1.0))
    assert bump(np.array([1.0, 1.5])).tolist() == [0.0, 0.0]
    assert bump(np.array([[0.6, 0.8]]))[0] == 0.0


def test_packet_validation():
    ax = (uniform_axis(-1, 1, 11),)
    with pytest.raises(ValueError):
        WavePacket.bump_packet([0.5], 0.6, 1.0, ax)  # support leaves the grid
    with pytest.raises(ValueError):
        WavePacket(1.0, ax, np.ones(5), [-0.5], [0.5])
    with pytest.raises(ValueError):
        WavePacket(0.0, ax, np.ones(11), [-0.5], [0.5])


def test_profile_at_nodes_is_exact():
    f = line_packet(0.2, 0.7)
    nodes = f.axes[0][:, None]
    assert np.array_equal(f.profile_at(nodes), f.values)


def test_evaluate_at_time_zero_matches_inverse_fft():
    f = line_packet(0.1, 0.9, n=256, half=1.2)
    k = f.axes[0]
    h = f.spacing[0]
    n = k.size
    m = np.arange(-20, 21)
    x = 2 * np.pi * m / (n * h)
    dft = h / (2 * np.pi) * np.exp(1j * k[0] * x) * n * np.fft.ifft(f.values)[m % n]
    scale = np.max(np.abs(dft))
    assert np.max(np.abs(evaluate_kg(f, 0.0, x[:, None], refine=1) - dft)) <= 1e-12 * scale
    # spline refinement adds interpolation error only
    assert np.max(np.abs(evaluate_kg(f, 0.0, x[:, None], refine=4) - dft)) <= 1e-6 * scale


def test_evaluate_accepts_vector_times():
    f = line_packet()
    t = np.array([1.0, 2.0, 3.0])
    x = np.array([[0.1], [0.2], [0.3]])
    each = np.array([evaluate_kg(f, ti, xi[0]) for ti, xi in zip(t, x)])
    assert np.allclose(evaluate_kg(f, t, x), each, rtol=1e-12, atol=0)


def test_amplitude_outside_the_cone_is_negligible():
    f = line_packet(0.0, 1.0)
    far = evaluate_kg(f, 50.0, np.array([[300.0], [-300.0]]), refine=1)
    assert np.max(np.abs(far)) < 1e-8


def test_narrow_packet_decays_like_inverse_square_root_along_its_velocity():
    # the asymptotic regime starts once t exceeds 1/(width² ω''), so the window sits later
    k0 = 0.5
    f = WavePacket.bump_packet([k0], 0.3, 1.0, (uniform_axis(0.0, 1.0, 513),))
    v0 = k0 / omega(np.array([k0]), 1.0)
    table = decay_profile(f, [[float(v0)]], np.geomspace(100, 1000, 10), 0.05,
                          fit_window=(100, 1000), with_l1=False)
    assert table.classes == ["interior"]
    assert abs(table.slopes[0] + 0.5) <= 0.1


def test_velocity_support_basic_properties():
    f = line_packet(0.0, 1.0)
    v = velocity_support(f).velocities[:, 0]
    assert np.allclose(np.sort(v), np.sort(-v))
    assert np.allclose(v, f.support_sample[:, 0] / omega(f.support_sample, 1.0))
    g = plane_packet((0.3, -0.2), 0.8)
    assert np.all(np.linalg.norm(velocity_support(g).velocities, axis=1) < 1)
    with pytest.raises(ValueError):
        velocity_support(g, -0.1)


def test_boost_with_identity_keeps_profile():
    f = plane_packet((0.2, 0.1), 0.7)
    g = boost_packet(f, identity(3))
    pts = f.grid_points().reshape(-1, 2)
    assert np.allclose(g.profile_at(pts), f.profile_at(pts), atol=1e-14)


def test_boost_with_rotation_rotates_profile():
    f = plane_packet((0.3, 0.1), 0.6)
    rot = rotation((1, 2), 0.7, 3)
    g = boost_packet(f, rot)
    rng = np.random.default_rng(0)
    k = rng.uniform(-0.9, 0.9, size=(400, 2))
    rk = shell_map(rot, k, 1.0)
    expected = f.profile_at(rk)
    assert np.max(np.abs(g.profile_at(k) - expected)) <= 1e-3 * np.max(np.abs(f.values))


@pytest.mark.parametrize("beta", [-0.8, 0.4, 1.0])
def test_boost_matches_direct_evaluation(beta):
    f = WavePacket.bump_packet([0.3], 0.8, 1.0, (uniform_axis(-1.5, 1.5, 256),))
    lam = boost(1, beta, 2)
    g = boost_packet(f, lam)
    rng = np.random.default_rng(1)
    t, x = rng.uniform(-3, 3, 100), rng.uniform(-4, 4, 100)
    y = lam.apply(np.column_stack([t, x]))
    direct = evaluate_kg(f, y[:, 0], y[:, 1:])
    assert np.max(np.abs(evaluate_kg(g, t, x[:, None]) - direct)) <= 1e-3 * np.max(np.abs(direct))


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.0, 1.0))
def test_boost_round_trip(beta):
    f = WavePacket.bump_packet([0.2], 0.8, 1.0, (uniform_axis(-1.5, 1.5, 512),))
    lam = boost(1, beta, 2)
    back = boost_packet(boost_packet(f, lam), lam.inverse())
    k = f.axes[0][:, None]
    assert np.max(np.abs(back.profile_at(k) - f.values)) <= 1e-6


def test_boost_transports_support():
    f = plane_packet((0.1, 0.2), 0.6)
    lam = compose([boost(1, 0.6, 3), boost(2, -0.3, 3)])
    g = boost_packet(f, lam)
    image = shell_map(lam.inverse(), f.support_sample, 1.0)
    assert np.allclose(g.support_sample, image)
    assert np.all(g.support_lo <= image.min(axis=0)) and np.all(g.support_hi >= image.max(axis=0))


def test_boost_rejects_time_reversal():
    from wedgescatter.minkowski import LorentzTransform
    f = line_packet()
    flip = LorentzTransform.__new__(LorentzTransform)
    object.__setattr__(flip, "matrix", -np.eye(2))
    object.__setattr__(flip, "tol", 1e-12)
    with pytest.raises(ValueError):
        boost_packet(f, flip)


def test_modified_packet_identity_and_support():
    f = plane_packet((0.2, -0.1), 0.7)
    same = modified_packet(f, identity(3))
    assert np.allclose(same.values, f.values, rtol=0, atol=1e-15)
    lam = compose([boost(1, 0.7, 3), rotation((1, 2), 0.3, 3)])
    g = modified_packet(f, lam)
    assert np.array_equal(g.support_sample, f.support_sample)
    assert np.array_equal(velocity_support(g).points, velocity_support(f).points)
    grid = f.grid_points()
    factor = omega(shell_map(lam.inverse(), grid, 1.0), 1.0) / omega(grid, 1.0)
    assert np.allclose(g.values, f.values * factor, rtol=1e-14, atol=0)
    # the multiplier is not unimodular, so the grid norm changes
    assert abs(np.linalg.norm(g.values) - np.linalg.norm(f.values)) > 1e-3


def test_adapted_support_with_identity_is_plain_support():
    f = plane_packet((0.2, 0.1), 0.6)
    assert np.allclose(adapted_velocity_support(f, identity(3)).points, velocity_support(f).points)


def test_adapted_support_of_small_packet_follows_boost_velocity():
    from wedgescatter.minkowski import boost_velocity
    k0 = np.array([0.3, 0.0])
    f = WavePacket.bump_packet(k0, 0.01, 1.0, (uniform_axis(0.2, 0.4, 41), uniform_axis(-0.1, 0.1, 41)))
    lam = boost(1, 0.5, 3)
    pts = adapted_velocity_support(f, lam).points
    v0 = k0 / omega(k0, 1.0)
    expected = lam.apply(np.concatenate([[1.0], boost_velocity(v0, 0.5)]))
    direction = pts / pts[:, :1]
    assert np.allclose(direction, expected / expected[0], atol=0.02)


def test_decay_profile_classes_and_slopes():
    f = line_packet(0.0, 1.0, n=1025, half=1.3)
    table = decay_profile(f, [[0.2], [6.0]], np.geomspace(10, 100, 12), 0.2)
    assert table.classes == ["interior", "exterior"]
    assert abs(table.slopes[0] + 0.5) <= 0.1
    assert table.slopes[1] <= -6
    assert table.l1_exponent <= 0.6
    rows = list(table.rows())
    assert len(rows) == 24 and rows[0][-1] == "interior"


def test_decay_profile_input_checks():
    f = line_packet()
    with pytest.raises(ValueError):
        decay_profile(f, [[0.0]], [10.0, 20.0], 0.1)
    with pytest.raises(ValueError):
        decay_profile(f, [[0.0, 0.0]], [10.0, 20.0, 30.0], 0.1)
    with pytest.raises(ValueError):
        decay_profile(f, [[0.0]], [1.0, 2.0, 3.0], 0.1)  # nothing inside [10, 100]


def test_fit_loglog_slope_recovers_power_law():
    t = np.geomspace(1, 100, 7)
    assert fit_loglog_slope(t, 3 * t ** -1.7) == pytest.approx(-1.7)
    with pytest.raises(ValueError):
        fit_loglog_slope(t, -t)


def test_l1_norm_at_time_zero_is_finite_and_positive():
    f = line_packet()
    assert 0 < l1_norm(f, 1.0) < np.inf
