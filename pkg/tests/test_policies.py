import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interq.dqn import Checkpoint, epsilon_greedy_action, save_checkpoint
from interq.env import closed_loop_rollout, rollout_rng, sample_noise_sequence, simulate_batch
from interq.errors import ValidationError
from interq.nn import MlpParams, init_mlp
from interq.policies import (
    Always,
    DqnPolicy,
    EventTriggered,
    Never,
    Periodic,
    dqn_decide,
    event_decide,
    periodic_decide,
    policy_from_config,
)


def constant_net(q0, q1, n_x=2):
    """Net whose output ignores the input."""
    return MlpParams((n_x, 2), [np.zeros((2, n_x))], [np.array([q0, q1], dtype=float)])


def test_dqn_decide_examples():
    assert dqn_decide(constant_net(3.0, 3.0), np.ones(2)) == 0
    assert dqn_decide(constant_net(1.0, 0.0), np.ones(2)) == 1
    assert dqn_decide(constant_net(0.0, 1.0), np.ones(2)) == 0


def test_dqn_matches_greedy_exploration():
    net = init_mlp((2, 8, 2), 3)
    rng = np.random.default_rng(0)
    E = rng.normal(scale=5.0, size=(200, 2))
    batch = DqnPolicy(net).decide_batch(E)
    for e, a in zip(E, batch):
        assert dqn_decide(net, e) == epsilon_greedy_action(net, e, 0.0, rng) == a


def test_periodic_examples():
    assert all(periodic_decide(1, k) == 1 for k in range(20))
    assert periodic_decide(3, 4) == 0 and periodic_decide(3, 6) == 1
    assert all(periodic_decide(t, 0) == 1 for t in range(1, 10))


def test_event_examples():
    assert event_decide(0.0, np.zeros(2)) == 1
    assert event_decide(2.0, np.array([1.0, 1.0])) == 1
    assert event_decide(0.1, np.zeros(2)) == 0


@pytest.mark.parametrize("bad", [0, -1, 2.5])
def test_periodic_rejects_bad_tau(bad):
    with pytest.raises(ValidationError):
        Periodic(bad)


def test_event_rejects_negative_tau():
    with pytest.raises(ValidationError):
        EventTriggered(-0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=2), st.floats(1.0, 10.0), st.floats(0.0, 500.0))
def test_event_scale_monotone(e, c, tau):
    e = np.array(e)
    if event_decide(tau, e):
        assert event_decide(tau, c * e)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 12))
def test_periodic_ignores_error_and_event_ignores_time(k, tau):
    e = np.array([3.0, -2.0])
    assert Periodic(tau).decide(e, k) == Periodic(tau).decide(-7 * e, k)
    assert EventTriggered(5.0).decide(e, k) == EventTriggered(5.0).decide(e, k + tau)


def test_trivial_policies_equivalent(paper):
    m, sol = paper
    H = 80
    noise = sample_noise_sequence(m.noise, np.random.default_rng(5), H)
    runs = [closed_loop_rollout(m, sol, p, H, None, noise=noise) for p in (Periodic(1), EventTriggered(0.0), Always())]
    for r in runs[1:]:
        assert np.array_equal(r.actions, runs[0].actions)
        assert (r.control_cost, r.comm_cost) == (runs[0].control_cost, runs[0].comm_cost)


def test_never_cost_grows_with_horizon(paper):
    m, sol = paper
    H = 25  # 1.51**50 stays below the overflow guard
    noise = np.stack([sample_noise_sequence(m.noise, rollout_rng(2, i), 2 * H) for i in range(20)])
    c_short, comm_short, _, _ = simulate_batch(m, sol, Never(), H, noise[:, :H])
    c_long, comm_long, _, _ = simulate_batch(m, sol, Never(), 2 * H, noise)
    assert not comm_long.any()
    assert c_long.mean() > c_short.mean()


def test_batch_and_single_agree():
    E = np.random.default_rng(1).normal(scale=3.0, size=(50, 2))
    for p in (Periodic(4), EventTriggered(2.0), Always(), Never(), DqnPolicy(init_mlp((2, 6, 2), 0))):
        for k in (0, 3, 4):
            np.testing.assert_array_equal(p.decide_batch(E, k), [p.decide(e, k) for e in E])


def test_policy_from_config(tmp_path):
    assert policy_from_config({"policy": "periodic", "tau": 5}) == Periodic(5)
    assert policy_from_config({"policy": "event", "tau": 12.5}) == EventTriggered(12.5)
    assert isinstance(policy_from_config({"policy": "always"}), Always)
    assert isinstance(policy_from_config({"policy": "never"}), Never)
    net = init_mlp((2, 4, 2), 0)
    path = tmp_path / "net.json"
    save_checkpoint(Checkpoint(net, {"lambda": 1.0}), path)
    p = policy_from_config({"policy": "dqn", "ckpt": str(path)})
    assert p.net.equals(net)
    with pytest.raises(ValidationError):
        policy_from_config({"policy": "random"})
