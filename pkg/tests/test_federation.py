from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridfed import agent, federation
from gridfed.agent import AgentParams, NetLayout, TrainConfig, init_params
from gridfed.datagen import GridConfig, generate_day
from gridfed.env import HouseholdScenario
from gridfed.federation import (
    ClientState, FederationConfig, FederationError, RoundLog, fed_avg, read_round_logs,
    run_federated_training, run_isolated_training, write_round_logs,
)

LAY = NetLayout(hidden_dims=(8,))
CFG = TrainConfig(actor_lr=0.01, critic_lr=0.03, entropy_coef=0.01, episodes_per_update=1)


def params_from(value_actor, value_critic, layout=LAY):
    p = init_params(layout, 0)
    return AgentParams(layout, np.full(p.actor.size, value_actor, dtype=float),
                       np.full(p.critic.size, value_critic, dtype=float))


def clients(n, params=None, stream_ids=None):
    p = init_params(LAY, 0) if params is None else params
    return [ClientState(i, p, HouseholdScenario(i, i % 3), stream_id=None if stream_ids is None else stream_ids[i])
            for i in range(n)]


# ----------------------------------------------------------------- fed_avg

def test_fed_avg_equal_weights():
    out = fed_avg([params_from(1.0, 2.0), params_from(3.0, 6.0)])
    assert np.all(out.actor == 2.0) and np.all(out.critic == 4.0)


def test_fed_avg_weighted():
    out = fed_avg([params_from(0.0, 0.0), params_from(4.0, 8.0)], [3, 1])
    assert np.all(out.actor == 1.0) and np.all(out.critic == 2.0)


def test_fed_avg_single_client_identity():
    p = init_params(LAY, 3)
    assert fed_avg([p]) == p
    assert fed_avg([p], [5.0]) == p


def test_fed_avg_identical_clients_exact():
    p = init_params(LAY, 4)
    assert fed_avg([p, p, p], [0.1, 0.7, 0.2]) == p


def test_fed_avg_zero_weight_client_ignored():
    a, b = init_params(LAY, 1), init_params(LAY, 2)
    assert fed_avg([a, b], [1.0, 0.0]) == a


def test_fed_avg_rejects_bad_input():
    a = init_params(LAY, 1)
    with pytest.raises(ValueError):
        fed_avg([])
    with pytest.raises(ValueError):
        fed_avg([a, init_params(NetLayout(hidden_dims=(4,)), 0)])
    with pytest.raises(ValueError):
        fed_avg([a, a], [0.0, 0.0])
    with pytest.raises(ValueError):
        fed_avg([a, a], [1.0, -1.0])
    with pytest.raises(ValueError):
        fed_avg([a, a], [1.0])


@settings(max_examples=50, deadline=None)
@given(seeds=st.lists(st.integers(0, 1000), min_size=1, max_size=5), data=st.data())
def test_fed_avg_envelope_and_affine(seeds, data):
    ps = [init_params(LAY, s) for s in seeds]
    w = data.draw(st.lists(st.floats(0.01, 10), min_size=len(ps), max_size=len(ps)))
    out = fed_avg(ps, w)
    stack = np.stack([p.actor for p in ps])
    assert np.all(out.actor >= stack.min(0)) and np.all(out.actor <= stack.max(0))
    # avg(a*x + b) == a*avg(x) + b
    a, b = data.draw(st.floats(-3, 3)), data.draw(st.floats(-3, 3))
    moved = [AgentParams(LAY, a * p.actor + b, a * p.critic + b) for p in ps]
    lhs = fed_avg(moved, w)
    np.testing.assert_allclose(lhs.actor, a * out.actor + b, atol=1e-12)
    np.testing.assert_allclose(lhs.critic, a * out.critic + b, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds=st.lists(st.integers(0, 1000), min_size=2, max_size=5), data=st.data())
def test_fed_avg_permutation_invariant(seeds, data):
    ps = [init_params(LAY, s) for s in seeds]
    perm = data.draw(st.permutations(range(len(ps))))
    a = fed_avg(ps)
    b = fed_avg([ps[i] for i in perm])
    np.testing.assert_allclose(a.actor, b.actor, atol=1e-15)


def test_federation_config_validation():
    with pytest.raises(ValueError):
        FederationConfig(sync_interval=0)
    with pytest.raises(ValueError):
        FederationConfig(rounds=-1)
    with pytest.raises(ValueError):
        FederationConfig(client_weights=(0.0, 0.0))


# ---------------------------------------------------------------- training

def test_single_client_federated_equals_isolated():
    fed = FederationConfig(sync_interval=3, rounds=2)
    a = run_federated_training(clients(1), GridConfig(), CFG, fed, seed=7)
    b = run_isolated_training(clients(1), GridConfig(), CFG, fed, seed=7)
    assert a.final == b.final


def test_two_client_sync_equals_hand_mean():
    fed = FederationConfig(sync_interval=2, rounds=1)
    iso = run_isolated_training(clients(2), GridConfig(), CFG, fed, seed=3)
    out = run_federated_training(clients(2), GridConfig(), CFG, fed, seed=3)
    expect_actor = (iso.params[0].actor + iso.params[1].actor) / 2
    expect_critic = (iso.params[0].critic + iso.params[1].critic) / 2
    np.testing.assert_allclose(out.final.actor, expect_actor, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.final.critic, expect_critic, rtol=0, atol=1e-15)


def test_all_clients_bit_identical_after_sync():
    out = run_federated_training(clients(4), GridConfig(), CFG, FederationConfig(2, 2), seed=1)
    assert all(p == out.params[0] for p in out.params)


def test_identical_clients_same_stream_stay_identical():
    # same scenario, same stream -> identical local updates -> average equals each
    p = init_params(LAY, 0)
    h = HouseholdScenario(0, 0)
    cs = [ClientState(i, p, h, stream_id=9) for i in range(3)]
    iso = run_isolated_training(cs, GridConfig(), CFG, FederationConfig(2, 1), seed=5)
    fed = run_federated_training(cs, GridConfig(), CFG, FederationConfig(2, 1), seed=5)
    assert iso.params[0] == iso.params[1] == iso.params[2]
    assert fed.final == iso.params[0]


def test_executor_does_not_change_results():
    fed = FederationConfig(2, 2)
    serial = run_federated_training(clients(4), GridConfig(), CFG, fed, seed=11)
    with ThreadPoolExecutor(4) as ex:
        parallel = run_federated_training(clients(4), GridConfig(), CFG, fed, seed=11, executor=ex)
    assert serial.final == parallel.final
    assert serial.logs == parallel.logs


def test_isolated_clients_diverge():
    out = run_isolated_training(clients(2), GridConfig(), CFG, FederationConfig(2, 1), seed=0)
    assert out.params[0] != out.params[1]


def test_zero_rounds_returns_initial():
    p = init_params(LAY, 2)
    out = run_federated_training(clients(3, p), GridConfig(), CFG, FederationConfig(5, 0), seed=0)
    assert all(q == p for q in out.params) and out.logs == []


def test_episode_counts_and_logs():
    h = HouseholdScenario(9, 0)
    val = [(h, generate_day(h, GridConfig(), 24, 0))]
    out = run_federated_training(clients(2), GridConfig(), CFG, FederationConfig(3, 2), seed=0, validation=val)
    assert [c.episodes_completed for c in out.clients] == [6, 6]
    assert [(l.round, l.split) for l in out.logs] == [(1, "train"), (1, "train"), (1, "validation"),
                                                      (2, "train"), (2, "train"), (2, "validation")]


def test_input_clients_not_mutated():
    cs = clients(2)
    before = [c.params for c in cs]
    run_federated_training(cs, GridConfig(), CFG, FederationConfig(2, 1), seed=0)
    assert [c.params for c in cs] == before and all(c.episodes_completed == 0 for c in cs)


def test_round_hook_called_every_round():
    seen = []
    run_federated_training(clients(2), GridConfig(), CFG, FederationConfig(1, 3), seed=0,
                           on_round=lambda r, ps: seen.append((r, len(ps))))
    assert seen == [(1, 2), (2, 2), (3, 2)]


def test_client_weight_count_checked():
    with pytest.raises(ValueError):
        run_federated_training(clients(2), GridConfig(), CFG, FederationConfig(1, 1, (1.0, 2.0, 3.0)), seed=0)


def test_numerical_failure_rolls_back(monkeypatch):
    calls = {"n": 0}
    real = agent.train_episodes

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] > 2:  # fail in round 2
            raise agent.NumericalError("boom")
        return real(*args, **kw)

    monkeypatch.setattr(federation, "train_episodes", flaky)
    good = run_federated_training(clients(2), GridConfig(), CFG, FederationConfig(2, 1), seed=4).final
    calls["n"] = 0
    with pytest.raises(FederationError) as err:
        run_federated_training(clients(2), GridConfig(), CFG, FederationConfig(2, 3), seed=4)
    assert err.value.round_index == 2
    assert all(p == good for p in err.value.rollback)


# -------------------------------------------------------------- round logs

def test_round_log_roundtrip(tmp_path):
    logs = [RoundLog(1, 0, "train", -0.123456789012345, 0.1, 1 / 3), RoundLog(1, 7, "validation", 0.0, -0.5, 0.25)]
    write_round_logs(logs, tmp_path / "log.csv")
    assert (tmp_path / "log.csv").read_text().splitlines()[0] == "round,client_id,split,mean_reward,price_score,emission_score"
    assert read_round_logs(tmp_path / "log.csv") == logs


def test_round_log_bad_header(tmp_path):
    (tmp_path / "log.csv").write_text("x\n")
    with pytest.raises(ValueError):
        read_round_logs(tmp_path / "log.csv")
