import json
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from endonav.configio import ConfigError
from endonav.env import (OBS_DIM, OBS_LAYOUT, REWARD_BONUS, VARIANTS, EnvUsageError, Observation, SceneConfig,
                         VectorEnv, build_scene, make_variant, normalise_force, periodic_force, reward_terms)
from endonav.evalsuite import ScriptedOracle

GOLDEN = json.loads((Path(__file__).parent / "data" / "observation_layout.json").read_text())


@pytest.mark.parametrize("dist,x,reward,term", [
    (5.0, 20.0, -5.0, False),
    (2.9, 20.0, 9997.1, True),
    (5.0, 10.0, -10005.0, True),
])
def test_reward_table(dist, x, reward, term):
    r_dis, r_b, r_s, success, boundary = reward_terms(dist, x, 15.0, 3.0)
    assert r_dis + r_b + r_s == reward
    assert (success or boundary) == term


def test_success_beats_boundary():
    _, r_b, r_s, success, boundary = reward_terms(1.0, 10.0, 15.0, 3.0)
    assert success and not boundary and r_b == 0.0 and r_s == REWARD_BONUS


def test_periodic_force_branches():
    f0 = (0.0, -1.0, 0.0)
    assert all(np.array_equal(periodic_force(t, 20, f0), f0) for t in range(20))
    assert all(np.array_equal(periodic_force(t, 20, f0), [0.0, 1.0, 0.0]) for t in range(20, 40))
    with pytest.raises(ValueError):
        periodic_force(0, 0, f0)


@given(st.integers(0, 10 ** 6), st.integers(1, 500), st.floats(-10, 10))
def test_periodic_force_period(t, T, a):
    assert np.array_equal(periodic_force(t, T, (a, 0, 0)), periodic_force(t + 2 * T, T, (a, 0, 0)))


def test_variants_only_touch_their_fields():
    base = SceneConfig(f0=(0.5, -1.0, 0.25))
    assert make_variant(base, "UE1").f0 == (1.0, -2.0, 0.5)
    assert make_variant(base, "UE2").f0 == (1.5, -3.0, 0.75)
    assert make_variant(base, "SE").f0 == (0.0, 0.0, 0.0)
    assert make_variant(base, "UE2").target_set == "B" and make_variant(base, "DE").target_set == "A"
    for v in VARIANTS:
        out = make_variant(base, v)
        changed = {f.name for f in fields(SceneConfig) if getattr(out, f.name) != getattr(base, f.name)}
        assert changed <= {"variant", "f0", "target_set"}
    with pytest.raises(ConfigError):
        make_variant(base, "XX")


def test_observation_golden_layout():
    assert OBS_DIM == GOLDEN["dim"] == 15
    assert list(OBS_LAYOUT) == GOLDEN["fields"]
    o = Observation(np.array([0, 1, 2.0]), np.array([3, 4, 5.0]), np.array([6, 7, 8, 9.0]), 10.0, 11.0,
                    np.array([12, 13, 14.0]))
    assert np.array_equal(o.vector(), np.arange(15.0))
    back = Observation.from_vector(o.vector())
    assert np.array_equal(back.vector(), o.vector())


def test_force_normalisation_clamped():
    assert np.array_equal(normalise_force([10.0, 0, 0], 5.0), [1.0, 0, 0])
    assert np.allclose(normalise_force([2.0, 1.0, 0], 5.0), [0.4, 0.2, 0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
def test_force_norm_bounded(f):
    assert np.linalg.norm(normalise_force(f, 5.0)) <= 1 + 1e-9


def test_config_errors():
    with pytest.raises(ConfigError):
        SceneConfig(success_radius=0.0)
    with pytest.raises(ConfigError):
        SceneConfig(substeps=0)
    with pytest.raises(ConfigError, match="fixed_indices"):
        build_scene(SceneConfig(fixed_indices=(0, 10 ** 6)))
    with pytest.raises(ConfigError, match="boundary"):
        build_scene(SceneConfig(boundary_x=1e4))


def test_build_is_deterministic(make_scene):
    a, b = make_scene("DE"), make_scene("DE")
    assert np.array_equal(a.body.u, b.body.u) and np.array_equal(a.rod.x, b.rod.x)
    assert a.targets.A == b.targets.A


def test_target_sets(make_scene):
    sc = make_scene("DE")
    A, B = set(sc.targets.A), set(sc.targets.B)
    assert A and B and not A & B
    assert A | B <= set(sc.inner_vertices.tolist())


def test_reset_out_of_contact_and_seeded(make_scene):
    sc = make_scene("DE")
    o1 = sc.reset(seed=5).vector()
    t1 = sc.target_index
    assert o1[11] == 0.0 and not o1[12:].any()
    sc.step([0.4, 0, 0, 0, 0.4])
    o2 = sc.reset(seed=5).vector()
    assert sc.target_index == t1 and np.array_equal(o1, o2)


def test_fe_targets_are_free_points(make_scene):
    sc = make_scene("FE")
    pts = sc.targets.points_A
    assert len(pts) == len(sc.targets.A)
    inner = sc.mesh.vertices[sc.inner_vertices]
    d = np.linalg.norm(pts[:, None] - inner[None], axis=2).min(axis=1)
    assert d.min() > 2.0
    sc.reset(seed=1)
    assert np.array_equal(sc.current_target(), pts[sc.target_index])


def test_step_contract_and_recomputation(make_scene):
    sc = make_scene("DE")
    pol = ScriptedOracle()
    pol.bind(sc)
    obs = sc.reset(seed=3)
    cfg = sc.config
    while True:
        r = sc.step(pol(obs))
        obs = r.observation
        info = r.info
        r_dis, r_b, r_s = info["reward_terms"]
        assert r.reward == r_dis + r_b + r_s
        assert r_dis == -info["distance"]
        assert np.abs(obs.p - (info["target"] - info["ee"])).max() <= 1e-9
        assert not (r.terminated and r.truncated)
        if info["success"]:
            assert info["distance"] < cfg.success_radius
        if r.terminated:
            assert info["success"] != info["boundary"]
        if r.terminated or r.truncated:
            break
    with pytest.raises(EnvUsageError):
        sc.step(np.zeros(5))


def test_truncation_at_max_steps(make_scene):
    sc = make_scene("SE", max_steps=7)
    sc.reset(seed=0)
    for k in range(1, 8):
        r = sc.step(np.zeros(5))
        assert r.truncated == (k == 7)
        assert not r.terminated


def test_force_blind_zeroes_contact_channels(make_scene):
    runs = {}
    for blind in (False, True):
        sc = make_scene("DE", force_observation=not blind)
        pol = ScriptedOracle()
        pol.bind(sc)
        obs = sc.reset(seed=3)
        vecs, forces = [], []
        for _ in range(40):
            r = sc.step(pol(obs))
            obs = r.observation
            vecs.append(obs.vector())
            forces.append(r.info["force"])
            if r.terminated or r.truncated:
                break
        runs[blind] = (np.array(vecs), np.array(forces))
    seen, blind = runs[False][0], runs[True][0]
    assert seen[:, 11].max() == 1.0                     # the oracle does touch the wall
    assert not blind[:, 11:].any()
    assert np.array_equal(seen[:, :11], blind[:, :11])   # physics untouched by the flag
    assert np.array_equal(runs[False][1], runs[True][1])


def test_step_determinism(make_scene):
    rng = np.random.default_rng(0)
    actions = rng.uniform(-0.4, 0.4, (25, 5))
    out = []
    for _ in range(2):
        sc = make_scene("DE")
        sc.reset(seed=11)
        out.append([(sc.step(a).observation.vector(), sc.body.u.copy()) for a in actions])
    for (o1, u1), (o2, u2) in zip(*out):
        assert np.array_equal(o1, o2) and np.array_equal(u1, u2)


def test_state_round_trip_continues_identically(make_scene):
    sc = make_scene("DE")
    sc.reset(seed=2)
    rng = np.random.default_rng(1)
    for a in rng.uniform(-0.4, 0.4, (10, 5)):
        sc.step(a)
    arrays, meta = sc.get_state()
    tail = rng.uniform(-0.4, 0.4, (10, 5))
    ref = [sc.step(a).observation.vector() for a in tail]
    other = make_scene("DE")
    other.set_state(arrays, meta)
    again = [other.step(a).observation.vector() for a in tail]
    assert all(np.array_equal(x, y) for x, y in zip(ref, again))


def test_static_cavity_stays_still(make_scene):
    sc = make_scene("SE", max_steps=200)
    sc.reset(seed=0)
    u0 = sc.body.u.copy()
    for _ in range(100):
        sc.step(np.zeros(5))
        assert np.abs(sc.body.u - u0).max() < 1e-3


def test_dynamic_cavity_period(make_scene):
    sc = make_scene("DE", max_steps=200)
    sc.reset(seed=0)
    T = sc.config.period
    node = sc.force_indices[0]
    ys = []
    for _ in range(8 * T):
        sc.step(np.zeros(5))
        ys.append(sc.body.u[3 * node + 1])
    y = np.array(ys[T:]) - np.mean(ys[T:])
    ac = np.array([y[:-lag] @ y[lag:] / (len(y) - lag) for lag in range(T + T // 2, 3 * T)])
    peak = T + T // 2 + int(np.argmax(ac))
    assert abs(peak - 2 * T) <= 1
    assert np.ptp(y) > 0.1


def test_vector_env_wraps_scene(make_scene):
    env = VectorEnv(make_scene("SE"))
    o = env.reset(seed=1)
    assert o.shape == (env.obs_dim,) == (15,)
    o2, r, term, trunc, info = env.step(np.zeros(env.act_dim))
    assert o2.shape == (15,) and isinstance(r, float) and "success" in info
