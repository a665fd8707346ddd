import math

import numpy as np
import pytest

from ctcsim.catalog import generate_layout, lookup_task
from ctcsim.config import DEFENSE, PURSUIT, EngineConfig
from ctcsim.env import CombatEnv, ContractError, SpecValidationError
from tests.conftest import make_spec


def run_until_done(env, actions):
    out = None
    while not env.terminated:
        _, out = env.step(actions)
    return out


# ---------------------------------------------------------------------------
# reset


def test_reset_deterministic():
    spec = lookup_task("HoS_D2G")
    env = CombatEnv(spec)
    obs1, state1 = env.reset(0)
    obs2, state2 = env.reset(0)
    assert np.array_equal(obs1, obs2)
    assert np.array_equal(state1, state2)
    obs3, _ = env.reset(1)
    assert not np.array_equal(obs1, obs3)


def test_reset_hea_d2g_has_six_agents():
    env = CombatEnv(lookup_task("HeA_D2G"))
    obs, state = env.reset(0)
    assert env.n_agents == 6
    assert obs.shape == (6, env.obs_size)
    assert state.shape == (env.state_size,)


def test_reset_rejects_asymmetric_spec():
    spec = make_spec([{"marine": 1}, {"marine": 1}], allies=[{"marine": 2}, {"marine": 1}])
    with pytest.raises(SpecValidationError):
        CombatEnv(spec)


def test_reset_accepts_single_subtask_spec():
    spec = make_spec([{"marine": 2}])
    env = CombatEnv(spec)
    env.reset(0)
    assert env.n_agents == 2


# ---------------------------------------------------------------------------
# termination semantics


def test_win_when_last_enemy_dies():
    # one defense lane 1v1; ally wins the mirror thanks to resolution order
    spec = make_spec([{"marine": 1}])
    env = CombatEnv(spec)
    env.reset(0)
    out = None
    while not env.terminated:
        masks = env.availability_masks()
        act = 6 if masks[0, 6] else 2  # close then keep shooting
        _, out = env.step([act])
    assert out.won and out.terminated
    assert out.failed_subtask is None
    assert out.info["kills"] == 1


def test_pursuit_base_reach_fails_with_subtask_index():
    env = CombatEnv(lookup_task("HeA_M2G"))
    env.reset(0)
    out = run_until_done(env, [1] * env.n_agents)
    assert out.terminated and not out.won
    assert out.failed_subtask == 0


def test_timeout_is_failure_without_subtask():
    # stationary enemies, idle agents: nothing ever happens
    spec = make_spec([{"marine": 1}, {"marine": 1}], episode_limit=25)
    env = CombatEnv(spec, cfg=EngineConfig(defense_enemy_mode="stationary"))
    env.reset(0)
    out = run_until_done(env, [1, 1])
    assert out.terminated and not out.won
    assert out.failed_subtask is None
    assert out.info["steps"] == 25


def test_step_after_termination_raises():
    spec = make_spec([{"marine": 1}, {"marine": 1}], episode_limit=3)
    env = CombatEnv(spec, cfg=EngineConfig(defense_enemy_mode="stationary"))
    env.reset(0)
    run_until_done(env, [1, 1])
    with pytest.raises(ContractError):
        env.step([1, 1])


def test_step_before_reset_raises():
    env = CombatEnv(lookup_task("HoS_D2G"))
    with pytest.raises(ContractError):
        env.step([1] * 6)


def test_idle_step_zero_reward():
    spec = make_spec([{"marine": 1}, {"marine": 1}])
    env = CombatEnv(spec, cfg=EngineConfig(defense_enemy_mode="stationary"))
    env.reset(0)
    _, out = env.step([1, 1])
    assert out.reward == 0.0 and not out.terminated


# ---------------------------------------------------------------------------
# visibility + observations


def test_compute_visibility_op(table):
    from ctcsim.env import compute_visibility
    from ctcsim.engine import UnitState

    marine = table.by_name("marine")

    def u(uid, x, alive=True):
        return UnitState(
            unit_id=uid, archetype=marine, allegiance=0, subtask_index=0,
            x=x, y=0.0, health=45.0 if alive else 0.0, alive=alive,
        )

    assert compute_visibility(u(0, 0.0), u(1, 7.0))  # 7 <= sight 9
    assert not compute_visibility(u(0, 0.0), u(1, 14.0))
    assert not compute_visibility(u(0, 0.0), u(1, 1.0, alive=False))


def test_visibility_radius_semantics():
    # distance 7 <= sight 9 -> visible; 14 -> not; dead -> not
    spec = make_spec([{"marine": 2}])
    env = CombatEnv(spec)
    env.reset(0)
    sim = env._sim
    # plant exact positions: agent 0 at origin-ish, enemies at 7 and 14
    sim.pos[0] = (10.0, 10.0)
    sim.pos[1] = (30.0, 30.0)
    sim.pos[2] = (10.0, 17.0)
    sim.pos[3] = (10.0, 24.0)
    obs = env.observations()
    assert obs[0, 0] == 1.0  # enemy slot 0 (unit 2) at distance 7: visible
    assert obs[0, 1] == pytest.approx(7.0 / 9.0)
    assert obs[0, 8] == 0.0  # enemy slot 1 (unit 3) at distance 14: masked
    sim.alive[2] = False
    sim.health[2] = 0.0
    obs = env.observations()
    assert obs[0, 0] == 0.0  # dead entity at any distance: masked


def test_observation_masking_all_zero_when_invisible():
    env = CombatEnv(lookup_task("HoS_D2G"))
    obs, _ = env.reset(0)
    width = 8
    for a in range(env.n_agents):
        for slot in range(env.n_agents + env.n_enemies - 1):
            block = obs[a, slot * width : (slot + 1) * width]
            if block[0] == 0.0:
                assert np.all(block == 0.0)


def test_observation_features_bounded():
    env = CombatEnv(lookup_task("HeA_D4G"))
    obs, _ = env.reset(0)
    for _ in range(30):
        if env.terminated:
            break
        masks = env.availability_masks()
        acts = [int(np.flatnonzero(m)[0]) for m in masks]
        obs, _ = env.step(acts)
        assert np.all(obs <= 1.0) and np.all(obs >= -1.0)


def test_dead_agent_observation_is_zero():
    spec = make_spec([{"marine": 1}, {"marine": 1}])
    env = CombatEnv(spec)
    env.reset(0)
    env._sim.alive[0] = False
    env._sim.health[0] = 0.0
    obs = env.observations()
    assert np.all(obs[0] == 0.0)


# ---------------------------------------------------------------------------
# availability masks


def test_masks_invariants():
    env = CombatEnv(lookup_task("HeS_D2G"))
    env.reset(0)
    masks = env.availability_masks()
    alive = env.sim_arrays()["alive"][: env.n_agents]
    for a in range(env.n_agents):
        assert masks[a, 0] == (not alive[a])  # noop iff dead
        assert masks[a].any()  # >= 1 available action
        if alive[a]:
            assert masks[a, 1]  # stop always available when alive


def test_mask_targets_require_alive_and_in_range(table):
    spec = make_spec([{"marine": 1}, {"marine": 1}])
    env = CombatEnv(spec)
    env.reset(0)
    sim = env._sim
    sim.pos[0] = (10.0, 10.0)
    sim.pos[2] = (10.0, 15.0)  # in marine range 6
    sim.pos[3] = (10.0, 20.0)  # out of range
    masks = env.availability_masks()
    assert masks[0, 6] and not masks[0, 7]
    sim.alive[2] = False
    env._mask_step = -1  # force rebuild
    masks = env.availability_masks()
    assert not masks[0, 6]


def test_medivac_heal_slots_are_allies(table):
    env = CombatEnv(lookup_task("HeS_D2G"))
    env.reset(0)
    arch = env.sim_arrays()["arch"]
    medivac_agents = [a for a in range(env.n_agents) if arch[a] == 2]
    assert medivac_agents
    a = medivac_agents[0]
    sim = env._sim
    # put a hurt ally in heal range and everything else far away
    masks = env.availability_masks()
    heal_slots = np.flatnonzero(masks[a, 6:])
    for slot in heal_slots:
        j = int(slot)  # slot j is ally unit j for healers
        assert j != a
        d = math.hypot(sim.pos[j, 0] - sim.pos[a, 0], sim.pos[j, 1] - sim.pos[a, 1])
        assert d <= 4.0


def test_invalid_actions_coerced_and_counted():
    env = CombatEnv(lookup_task("HoS_D2G"))
    env.reset(0)
    # noop (0) is invalid for living agents; target slot for far enemy too
    _, out = env.step([0] * env.n_agents)
    assert out.info["coerced_actions"] == env.n_agents
    # coerced to stop: nobody moved or attacked
    assert np.array_equal(env.last_actions, np.ones(env.n_agents, np.int64))


def test_malformed_action_vector_raises():
    env = CombatEnv(lookup_task("HoS_D2G"))
    env.reset(0)
    with pytest.raises(ValueError):
        env.step([1, 1])


# ---------------------------------------------------------------------------
# reward


def test_reward_normalizer_hand_summed():
    # 6 marines x 45 hp + 10 per kill x 6 + 200 win, scaled to a 20 max
    env = CombatEnv(lookup_task("HoS_D2G"))
    assert env.reward_normalizer == pytest.approx((6 * 45.0 + 10.0 * 6 + 200.0) / 20.0)
    assert env.reward_normalizer == pytest.approx(26.5)


def test_reward_division_example():
    # 6 damage, no kill, no win under a hypothetical normalizer 57.75
    assert 6.0 / 57.75 == pytest.approx(0.1039, abs=5e-5)


def test_first_blood_reward_is_damage_over_normalizer():
    spec = make_spec([{"marine": 1}, {"marine": 1}])
    env = CombatEnv(spec, cfg=EngineConfig(defense_enemy_mode="stationary"))
    env.reset(0)
    sim = env._sim
    sim.pos[0] = (10.0, 10.0)
    sim.pos[2] = (10.0, 14.0)
    env._mask_step = -1
    _, out = env.step([6, 1])
    assert out.reward == pytest.approx(6.0 / env.reward_normalizer)


def test_win_step_includes_win_bonus():
    spec = make_spec([{"marine": 1}])
    env = CombatEnv(spec, cfg=EngineConfig(defense_enemy_mode="stationary"))
    env.reset(0)
    sim = env._sim
    sim.pos[0] = (10.0, 10.0)
    sim.pos[1] = (10.0, 14.0)
    sim.health[1] = 6.0
    env._mask_step = -1
    _, out = env.step([6])
    assert out.won
    expected = (6.0 + 10.0 + 200.0) / env.reward_normalizer
    assert out.reward == pytest.approx(expected)


def test_sparse_reward_mode():
    spec = make_spec([{"marine": 1}])
    env = CombatEnv(spec, cfg=EngineConfig(reward_mode="sparse", defense_enemy_mode="stationary"))
    env.reset(0)
    sim = env._sim
    sim.pos[0] = (10.0, 10.0)
    sim.pos[1] = (10.0, 14.0)
    env._mask_step = -1
    _, out = env.step([6])
    assert out.reward == 0.0


def test_episode_return_bounded_by_scale_max():
    from ctcsim.agents import make_policy

    for task in ("HoS_D2G", "HeS_D2G", "HeA_D2G"):
        spec = lookup_task(task)
        for seed in range(5):
            env = CombatEnv(spec)
            env.reset(seed)
            p = make_policy("oracle")
            p.reset(env, seed)
            total = 0.0
            while not env.terminated:
                _, out = env.step(p.act(env))
                total += out.reward
            assert total <= 20.0 + 1e-9


def test_kill_accounting_monotone_and_win_iff_all_killed():
    from ctcsim.agents import make_policy

    spec = lookup_task("HoS_D2G")
    for seed in range(10):
        env = CombatEnv(spec)
        env.reset(seed)
        p = make_policy("oracle")
        p.reset(env, seed)
        last = 0
        while not env.terminated:
            _, out = env.step(p.act(env))
            assert out.info["kills"] >= last
            last = out.info["kills"]
        assert last <= env.n_enemies
        assert out.won == (last == env.n_enemies)


# ---------------------------------------------------------------------------
# defense advance matches a hand-stepped oracle


def test_defense_advance_displacement_hand_oracle():
    spec = lookup_task("HoS_D2G")
    env = CombatEnv(spec)
    env.reset(0)
    before = env.sim_arrays()["pos"].copy()
    bases = env.layout.bases
    subtask = env.sim_arrays()["subtask"]
    env.step([1] * env.n_agents)
    after = env.sim_arrays()["pos"]
    for i in range(env.n_agents, env.n_agents + env.n_enemies):
        bx, by = bases[subtask[i]]
        dx, dy = bx - before[i, 0], by - before[i, 1]
        dist = math.hypot(dx, dy)
        step = min(1.0, dist)  # marine speed
        expect = (before[i, 0] + dx / dist * step, before[i, 1] + dy / dist * step)
        assert after[i, 0] == pytest.approx(expect[0], abs=1e-12)
        assert after[i, 1] == pytest.approx(expect[1], abs=1e-12)


# ---------------------------------------------------------------------------
# global state


def test_state_vector_layout():
    env = CombatEnv(lookup_task("HoS_D2G"))
    _, state = env.reset(0)
    n = env.n_agents + env.n_enemies
    s = state.reshape(n, 7)
    assert np.all(s[:, 0] == 1.0)  # everyone alive
    assert np.all(s[:, 1] == 1.0)  # full health
    assert np.all((s[:, 2:4] >= 0) & (s[:, 2:4] <= 1))
    assert np.all(s[:, 4] == 1.0)  # all marines
    assert np.all(s[:, 5:] == 0.0)
