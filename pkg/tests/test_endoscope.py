import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from endonav.endoscope import (ACTION_LIMIT, ActuationState, EndoscopeModel, Rod, actuation_forces, apply_action,
                               cable_to_target_curvature, cc_inverse, cc_tip, ee_state, tip_bend_angle)
from endonav.env import SceneConfig

DESK = SceneConfig().endoscope
SHORT = EndoscopeModel(passive_length=20.0, active_length=10.0, node_spacing=10.0, active_node_spacing=5.0)


def _rot(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


def test_model_validation():
    with pytest.raises(ValueError):
        EndoscopeModel(passive_length=10.0, active_length=20.0)
    with pytest.raises(ValueError):
        EndoscopeModel(active_length=5.0, active_node_spacing=5.0)


def test_zero_action_only_resets_axial():
    a = ActuationState((1.0, -2.0, 0.5, 0.0), 12.0, 0.3)
    b = apply_action(a, np.zeros(5), DESK)
    assert b.cables == a.cables and b.insertion == a.insertion and b.last_axial_action == 0.0


def test_component_clamped_to_limit():
    b = apply_action(ActuationState(insertion=10.0), [0.9, 0, 0, 0, -3.0], DESK)
    assert b.cables[0] == 0.4
    assert b.insertion == pytest.approx(9.6) and b.last_axial_action == -0.4


@settings(max_examples=200)
@given(st.lists(st.floats(allow_nan=True, allow_infinity=True), min_size=5, max_size=5))
def test_stored_deltas_within_limits(action):
    a = ActuationState((1.0, 2.0, 3.0, 4.0), 10.0)
    b = apply_action(a, action, DESK)
    d = np.array(b.cables) - np.array(a.cables)
    assert np.all(np.abs(d) <= ACTION_LIMIT + 1e-12)
    assert abs(b.last_axial_action) <= ACTION_LIMIT


def test_repeated_bending_saturates_at_ninety_degrees():
    act = ActuationState()
    for _ in range(200):
        act = apply_action(act, [0.4, -0.4, 0, 0, 0], DESK)
        assert np.all(np.abs(act.L) <= DESK.cable_limit)
    ty, _ = cable_to_target_curvature(act.L, DESK)
    assert ty == np.pi / 2


def test_insertion_saturates_at_track_limits():
    act = ActuationState(insertion=0.2)
    act = apply_action(act, [0, 0, 0, 0, -0.4], DESK)
    assert act.insertion == 0.0
    act = ActuationState(insertion=DESK.track_limit - 0.1)
    assert apply_action(act, [0, 0, 0, 0, 0.4], DESK).insertion == DESK.track_limit


def test_cc_map_examples():
    assert cable_to_target_curvature(np.zeros(4), moment_arm=3.0) == (0.0, 0.0)
    assert cable_to_target_curvature([9.42, 0, -9.42, 0], moment_arm=3.0)[0] == np.pi / 2
    assert cable_to_target_curvature([3.0, 0, -3.0, 0], moment_arm=3.0)[0] == pytest.approx(1.0)


@given(st.lists(st.floats(-9, 9), min_size=4, max_size=4))
def test_cc_map_antagonism(L):
    ty, tz = cable_to_target_curvature(L, DESK)
    ty2, tz2 = cable_to_target_curvature([L[2], L[3], L[0], L[1]], DESK)
    assert (ty2, tz2) == (-ty, -tz)


def test_straight_rod_has_no_force():
    rod = Rod(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    rod.reset(5.0)
    f = actuation_forces(rod.state, DESK, ActuationState(insertion=5.0))
    assert np.abs(f).max() < 1e-9


def test_single_joint_restoring_moment():
    rod = Rod(SHORT, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    x = rod.state.x
    theta = np.radians(10)
    R = _rot([0, 0, 1], theta)
    x[2:] = (x[2:] - x[1]) @ R.T + x[1]       # bend at joint 1 only
    f = actuation_forces(rod.state, SHORT, ActuationState())
    moment = sum(np.cross(x[i] - x[1], f[i]) for i in range(2, SHORT.n_nodes))
    l = SHORT.rest_lengths()
    expected = SHORT.bend_stiffness * theta / (0.5 * (l[0] + l[1]))
    assert np.linalg.norm(moment) == pytest.approx(expected, rel=1e-6)
    assert moment[2] < 0          # opposes the +z bend
    assert np.abs(f.sum(axis=0)).max() < 1e-9


def test_target_bend_settles():
    rod = Rod(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    d = DESK.cable_moment_arm
    act = ActuationState((d * np.pi / 6, 0.0, -d * np.pi / 6, 0.0), 10.0)
    rod.reset(10.0)
    rod.settle(act, 0.02, 2000)
    assert abs(np.degrees(tip_bend_angle(rod.state, DESK)) - 30.0) < 3.0
    # six chords instead of an arc: the tip sits within ~1.3 mm of the continuous prediction
    assert np.linalg.norm(rod.x[-1] - cc_tip(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0), 10.0, np.pi / 6, 0)) < 2.0


def test_ee_state_reads():
    rod = Rod(DESK, (3.0, 0, 0), (1, 0, 0), (0, 1, 0))
    rod.reset(7.0)
    p, v = ee_state(rod.state)
    assert abs(p[0] - (3.0 + 7.0 + DESK.total_length)) < 1e-9
    assert not v.any()
    rod.state.x += [1.0, 2.0, 3.0]
    assert np.array_equal(ee_state(rod.state)[0], p + [1.0, 2.0, 3.0])


def test_cc_inverse_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s, ty, tz = rng.uniform(0, 30), *rng.uniform(-1.0, 1.0, 2)
        if np.hypot(ty, tz) > np.pi / 2:
            continue
        p = cc_tip(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0), s, ty, tz)
        s2, ty2, tz2 = cc_inverse(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0), p)
        assert np.allclose([s2, ty2, tz2], [s, ty, tz], atol=1e-9)
    far = np.array([DESK.passive_length + 10, DESK.active_length, 0.0])
    assert cc_inverse(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0), far) is None


def _random_walk(seed, steps=60):
    rng = np.random.default_rng(seed)
    rod = Rod(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    act = ActuationState(insertion=10.0)
    rod.reset(10.0)
    worst_lat = worst_bend = 0.0
    bias = rng.uniform(-1, 1, 5)
    for _ in range(steps):
        act = apply_action(act, 0.4 * np.clip(bias + rng.normal(0, 0.5, 5), -1, 1), DESK)
        for _ in range(3):
            rod.step(0.04, act)
        worst_lat = max(worst_lat, float(np.hypot(rod.x[-1, 1], rod.x[-1, 2])))
        worst_bend = max(worst_bend, tip_bend_angle(rod.state, DESK))
    return worst_lat, worst_bend


def test_combined_bend_is_capped():
    rod = Rod(DESK, (0, 0, 0), (1, 0, 0), (0, 1, 0))
    lim = DESK.cable_limit
    act = ActuationState((lim, lim, -lim, -lim), 10.0)
    rod.reset(10.0)
    rod.settle(act, 0.04, 800)
    assert np.degrees(tip_bend_angle(rod.state, DESK)) == pytest.approx(90.0, abs=1.0)


def test_workspace_and_bend_bound_monte_carlo():
    # reduced sample; the acceptance-scale count lives in the demos
    bound = DESK.active_length * 2 / np.pi + DESK.radius + 1.0
    for seed in range(40):
        lat, bend = _random_walk(seed)
        assert lat <= bound
        assert np.degrees(bend) <= 95.0
