"""Linear Q-learner: action selection, TD updates, evaluation, training loop."""

import numpy as np
import pytest

from decoynet.errors import ConfigError, ContractViolationError, NumericError
from decoynet.game import (
    GameConfig,
    Isolate,
    NoOp,
    ObservationMatrix,
    action_space_size,
)
from decoynet.learn import (
    Policy,
    TrainConfig,
    TrainingCurve,
    Transition,
    act,
    act_index,
    evaluate,
    train,
    update,
)
from decoynet.netmodel import TopologySpec

IDS4 = tuple(range(4))


def obs_zeros(ids=IDS4):
    return ObservationMatrix.zeros(ids)


def obs_with(cell_host, cell_col, value=1, ids=IDS4):
    o = ObservationMatrix.zeros(ids)
    o.counts[list(ids).index(cell_host), cell_col] = value
    return o


def tiny_config(**kw):
    kw.setdefault("topology", TopologySpec(n_hosts=5, topology="star", n_crown_jewels=1))
    kw.setdefault("seed", 0)
    return GameConfig(**kw)


# ----------------------------------------------------------------------- act


def test_greedy_returns_hand_favored_action():
    policy = Policy.zeros(IDS4)
    isolate_h2 = 2 + 3 * 2
    policy.weights[isolate_h2, -1] = 1.0  # bias weight alone decides
    rng = np.random.default_rng(0)
    for _ in range(25):
        assert act(policy, obs_zeros(), 0.0, rng) == Isolate(2)
        assert act_index(policy, obs_zeros(), 0.0, rng) == isolate_h2


def test_epsilon_one_is_uniform():
    policy = Policy.zeros(IDS4)
    n_actions = action_space_size(4)
    rng = np.random.default_rng(7)
    counts = np.zeros(n_actions)
    n = 100_000
    obs = obs_zeros()
    for _ in range(n):
        counts[act_index(policy, obs, 1.0, rng)] += 1
    assert np.abs(counts / n - 1 / n_actions).max() <= 0.01


def test_equal_q_breaks_ties_low():
    policy = Policy.zeros(IDS4)  # all Q identical (0)
    rng = np.random.default_rng(0)
    assert act_index(policy, obs_zeros(), 0.0, rng) == 0
    assert act(policy, obs_zeros(), 0.0, rng) == NoOp()


def test_dimension_mismatch_rejected():
    policy = Policy.zeros(IDS4)
    with pytest.raises(ContractViolationError):
        act(policy, obs_zeros(tuple(range(6))), 0.0, np.random.default_rng(0))


def test_epsilon_bounds_checked():
    with pytest.raises(ConfigError):
        act(Policy.zeros(IDS4), obs_zeros(), 1.5, np.random.default_rng(0))


# -------------------------------------------------------------------- update


def test_lr_zero_is_identity():
    policy = Policy.zeros(IDS4)
    policy.weights[:] = np.random.default_rng(3).normal(size=policy.weights.shape)
    before = policy.weights.copy()
    t = Transition(obs_zeros(), 0, 1.0, obs_with(1, 3), False)
    out = update(policy, [t], lr=0.0, gamma=0.99)
    assert np.array_equal(out.weights, before)
    assert np.array_equal(policy.weights, before)  # input untouched either way


def test_single_transition_closed_form():
    policy = Policy.zeros(IDS4)
    policy.weights[:] = 0.1
    lr, gamma = 0.25, 0.9
    obs, nxt = obs_zeros(), obs_with(0, 0, value=2)
    t = Transition(obs, 3, 0.7, nxt, False)

    # the TD(0) formula, spelled out
    phi = np.concatenate([(obs.counts / 1.0).reshape(-1), [1.0]])
    phi_n = np.concatenate([(nxt.counts / 1.0).reshape(-1), [1.0]])
    w = np.full_like(policy.weights, 0.1)
    target = 0.7 + gamma * np.max(w @ phi_n)
    expected = w.copy()
    expected[3] += lr * (target - w[3] @ phi) * phi

    out = update(policy, [t], lr=lr, gamma=gamma)
    assert np.abs(out.weights - expected).max() < 1e-12


def test_terminal_transition_ignores_next_obs():
    policy = Policy.zeros(IDS4)
    t = Transition(obs_zeros(), 1, 1.0, obs_with(2, 5, value=9), True)
    out = update(policy, [t], lr=0.5, gamma=0.99)
    # target is bare reward: only the bias entry of action 1 moves
    assert out.weights[1, -1] == pytest.approx(0.5)
    mask = np.ones_like(out.weights, dtype=bool)
    mask[1, -1] = False
    assert not out.weights[mask].any()


def test_empty_batch_rejected():
    with pytest.raises(ContractViolationError):
        update(Policy.zeros(IDS4), [], lr=0.1, gamma=0.99)


def test_nonfinite_batch_raises_numeric_error():
    policy = Policy.zeros(IDS4)
    t = Transition(obs_zeros(), 0, float("inf"), obs_zeros(), True)
    with pytest.raises(NumericError):
        update(policy, [t], lr=0.5, gamma=0.99)


# One-host MDP encoded through observations: state A = zero matrix, state
# B = one event in the first cell. Two actions (indexes 0, 1). Deterministic
# dynamics, episodic at B/action-1.
IDS1 = (0,)
A = ObservationMatrix.zeros(IDS1)


def _state_b():
    o = ObservationMatrix.zeros(IDS1)
    o.counts[0, 0] = 1
    return o


B = _state_b()
MDP = [  # (obs, action, reward, next obs, done)
    Transition(A, 0, 0.1, A, False),
    Transition(A, 1, 0.0, B, False),
    Transition(B, 0, 0.0, A, False),
    Transition(B, 1, 1.0, A, True),
]
GAMMA = 0.9


def value_iteration_oracle():
    """Independent Bellman fixed point over the two-state chain."""
    q = {("A", 0): 0.0, ("A", 1): 0.0, ("B", 0): 0.0, ("B", 1): 0.0}
    for _ in range(500):
        v_a = max(q[("A", 0)], q[("A", 1)])
        v_b = max(q[("B", 0)], q[("B", 1)])
        q = {
            ("A", 0): 0.1 + GAMMA * v_a,
            ("A", 1): 0.0 + GAMMA * v_b,
            ("B", 0): 0.0 + GAMMA * v_a,
            ("B", 1): 1.0,
        }
    return q


def _q_table(policy):
    qa, qb = policy.q_values(A), policy.q_values(B)
    return {("A", 0): qa[0], ("A", 1): qa[1], ("B", 0): qb[0], ("B", 1): qb[1]}


def test_td_converges_to_value_iteration_fixed_point():
    oracle = value_iteration_oracle()
    policy = Policy.zeros(IDS1)
    policy = Policy(
        host_ids=IDS1,
        weights=np.zeros((2, policy.weights.shape[1])),  # tabular: 2 actions suffice
        feature_max=policy.feature_max,
    )
    dists = []
    for i in range(4000):
        policy = update(policy, MDP, lr=0.05, gamma=GAMMA)
        if i in (10, 200, 3999):
            q = _q_table(policy)
            dists.append(max(abs(q[k] - oracle[k]) for k in oracle))
    assert dists[0] > dists[1] > dists[2]  # contraction across checkpoints
    assert dists[-1] < 1e-3


# ------------------------------------------------------------------ evaluate


def test_termination_rates_sum_exactly_one():
    policy = Policy.zeros(tuple(range(5)))
    summary = evaluate(policy, tiny_config(), 7, seed=99)
    assert sum(summary.termination_rates.values()) == 1.0  # exact, not approx
    assert summary.n_episodes == 7
    assert set(summary.termination_rates) == set(
        ("blue_terminated", "red_goal_achieved", "red_believes_achieved", "red_conceded", "timeout")
    )
    assert len(summary.records) == 7


def test_evaluate_requires_episodes():
    with pytest.raises(ConfigError):
        evaluate(Policy.zeros(tuple(range(5))), tiny_config(), 0)


def test_evaluate_never_mutates_policy():
    policy = Policy.zeros(tuple(range(5)))
    policy.weights[:] = np.random.default_rng(1).normal(size=policy.weights.shape)
    before = policy.weights.copy()
    fmax_before = policy.feature_max.copy()
    evaluate(policy, tiny_config(), 5, seed=3)
    assert np.array_equal(policy.weights, before)
    assert np.array_equal(policy.feature_max, fmax_before)


def test_evaluate_deterministic_given_seed():
    policy = Policy.zeros(tuple(range(5)))
    a = evaluate(policy, tiny_config(), 6, seed=11)
    b = evaluate(policy, tiny_config(), 6, seed=11)
    assert a.mean_return == b.mean_return
    assert a.termination_rates == b.termination_rates
    assert [(r.seed, r.termination) for r in a.records] == [
        (r.seed, r.termination) for r in b.records
    ]


# --------------------------------------------------------------------- train


def small_train_cfg(**kw):
    kw.setdefault("total_steps", 800)
    kw.setdefault("eval_every", 400)
    kw.setdefault("eval_episodes", 4)
    kw.setdefault("buffer_size", 300)
    kw.setdefault("batch_size", 8)
    kw.setdefault("seed", 5)
    return TrainConfig(**kw)


def test_train_is_bit_identical_with_one_worker():
    cfg = tiny_config(seed=21)
    p1, c1 = train(cfg, small_train_cfg())
    p2, c2 = train(cfg, small_train_cfg())
    assert np.array_equal(p1.weights, p2.weights)
    assert np.array_equal(p1.feature_max, p2.feature_max)
    assert c1.points == c2.points


def test_training_curve_steps_strictly_increase():
    _, curve = train(tiny_config(seed=2), small_train_cfg(total_steps=1200, eval_every=300))
    steps = [p.step for p in curve.points]
    assert steps == sorted(set(steps))
    assert steps[-1] >= 1200
    for p in curve.points:
        for rate in (p.real_exfil_rate, p.fake_exfil_rate, p.concede_rate):
            assert 0.0 <= rate <= 1.0


def test_parallel_workers_produce_a_policy():
    policy, curve = train(tiny_config(seed=4), small_train_cfg(workers=2, total_steps=600))
    assert np.isfinite(policy.weights).all()
    assert curve.points


def test_train_config_validation():
    with pytest.raises(ConfigError, match="lr"):
        TrainConfig(lr=0.0).validate()
    with pytest.raises(ConfigError, match="gamma"):
        TrainConfig(gamma=1.5).validate()
    with pytest.raises(ConfigError, match="epsilon"):
        TrainConfig(epsilon_start=0.1, epsilon_end=0.9).validate()
    with pytest.raises(ConfigError, match="workers"):
        TrainConfig(workers=0).validate()


def test_curve_csv_schema():
    _, curve = train(tiny_config(seed=1), small_train_cfg(total_steps=400, eval_every=200))
    rows = curve.csv_rows()
    assert rows[0] == "step,mean_eval_return,real_exfil_rate,fake_exfil_rate,concede_rate"
    assert len(rows) == len(curve.points) + 1


# ------------------------------------------------------------- save and load


def test_policy_round_trip(tmp_path):
    policy = Policy.zeros(tuple(range(5)))
    policy.weights[:] = np.random.default_rng(8).normal(size=policy.weights.shape)
    policy.feature_max[:] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]
    path = tmp_path / "weights.json"
    policy.save(str(path))
    loaded = Policy.load(str(path))
    assert loaded.host_ids == policy.host_ids
    assert np.array_equal(loaded.weights, policy.weights)
    assert np.array_equal(loaded.feature_max, policy.feature_max)

    # a second save of the loaded policy is byte-identical
    path2 = tmp_path / "again.json"
    loaded.save(str(path2))
    assert path.read_bytes() == path2.read_bytes()
