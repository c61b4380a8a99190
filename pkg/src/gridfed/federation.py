"""Synchronous FedAvg across household agents.

Clients train locally for ``sync_interval`` episodes, then every client's
actor and critic are replaced by the weighted elementwise mean. Each client's
randomness comes from its own seed stream keyed on (master seed, stream id,
round), so results do not depend on the order in which clients run.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agent import AgentParams, NumericalError, TrainConfig, evaluate, train_episodes
from .datagen import DayData, GridConfig
from .env import HouseholdScenario, RewardWeights

log = logging.getLogger(__name__)


class FederationError(RuntimeError):
    """A client failed during a round; ``rollback`` holds the last good params per client."""

    def __init__(self, message: str, round_index: int, rollback: list[AgentParams]):
        super().__init__(message)
        self.round_index = round_index
        self.rollback = rollback


@dataclass(frozen=True)
class FederationConfig:
    sync_interval: int = 200
    rounds: int = 1
    client_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.sync_interval < 1:
            raise ValueError("sync_interval must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.client_weights is not None:
            w = tuple(float(x) for x in self.client_weights)
            if any(x < 0 for x in w) or not any(x > 0 for x in w):
                raise ValueError("client weights must be non-negative with at least one positive")
            object.__setattr__(self, "client_weights", w)


@dataclass
class ClientState:
    client_id: int
    params: AgentParams
    scenario: HouseholdScenario
    episodes_completed: int = 0
    stream_id: int | None = None

    @property
    def stream(self) -> int:
        return self.client_id if self.stream_id is None else self.stream_id


def fed_avg(params_list: Sequence[AgentParams], weights: Sequence[float] | None = None) -> AgentParams:
    """Weighted elementwise mean of actor and critic vectors."""
    if not params_list:
        raise ValueError("fed_avg needs at least one client")
    layout = params_list[0].layout
    if any(p.layout != layout for p in params_list):
        raise ValueError("clients have different network layouts")
    w = np.ones(len(params_list)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(params_list),):
        raise ValueError("one weight per client required")
    if np.any(w < 0) or not np.isfinite(w).all():
        raise ValueError("client weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("client weights sum to zero")
    w = w / total

    def avg(vectors):
        stack = np.stack(vectors)
        mean = w @ stack
        # the exact mean lies in the envelope; clipping only removes round-off
        return np.clip(mean, stack.min(axis=0), stack.max(axis=0))

    return AgentParams(layout, avg([p.actor for p in params_list]), avg([p.critic for p in params_list]))


def client_rng(master_seed: int, stream: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, stream, round_index]))


# ---------------------------------------------------------------- round logs

LOG_COLUMNS = ("round", "client_id", "split", "mean_reward", "price_score", "emission_score")


@dataclass(frozen=True)
class RoundLog:
    round: int
    client_id: int
    split: str
    mean_reward: float
    price_score: float
    emission_score: float


def write_round_logs(logs: Sequence[RoundLog], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in logs:
            w.writerow([r.round, r.client_id, r.split, repr(r.mean_reward),
                        repr(r.price_score), repr(r.emission_score)])


def read_round_logs(path: str | Path) -> list[RoundLog]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected round-log header")
        return [RoundLog(int(r["round"]), int(r["client_id"]), r["split"], float(r["mean_reward"]),
                         float(r["price_score"]), float(r["emission_score"])) for r in reader]


# ------------------------------------------------------------------ training

@dataclass
class TrainingResult:
    params: list[AgentParams]   # one entry per client; identical after a federated round
    logs: list[RoundLog] = field(default_factory=list)
    clients: list[ClientState] = field(default_factory=list)

    @property
    def final(self) -> AgentParams:
        return self.params[0]


RoundHook = Callable[[int, list[AgentParams]], None]


def _local_round(client: ClientState, grid: GridConfig, cfg: TrainConfig, episodes: int,
                 master_seed: int, round_index: int, weights: RewardWeights):
    rng = client_rng(master_seed, client.stream, round_index)
    return train_episodes(client.params, client.scenario, grid, cfg, episodes, rng, weights)


def _run(clients: Sequence[ClientState], grid: GridConfig, train_cfg: TrainConfig,
         fed_cfg: FederationConfig, seed: int, average: bool, weights: RewardWeights,
         validation: Sequence[tuple[HouseholdScenario, DayData]], executor: Executor | None,
         on_round: RoundHook | None) -> TrainingResult:
    if not clients:
        raise ValueError("need at least one client")
    layout = clients[0].params.layout
    if any(c.params.layout != layout for c in clients):
        raise ValueError("clients have different network layouts")
    if fed_cfg.client_weights is not None and len(fed_cfg.client_weights) != len(clients):
        raise ValueError("client_weights must have one entry per client")
    clients = [replace(c) for c in clients]
    logs: list[RoundLog] = []

    for r in range(1, fed_cfg.rounds + 1):
        last_good = [c.params for c in clients]

        def job(c, r=r):
            return _local_round(c, grid, train_cfg, fed_cfg.sync_interval, seed, r, weights)

        try:
            results = list(executor.map(job, clients)) if executor else [job(c) for c in clients]
        except NumericalError as exc:
            rollback = [fed_avg(last_good, fed_cfg.client_weights)] * len(clients) if average else last_good
            for c, p in zip(clients, rollback):
                c.params = p
            raise FederationError(f"round {r} aborted: {exc}", r, rollback) from exc

        for c, (params, stats, _) in zip(clients, results):
            c.params = params
            c.episodes_completed += len(stats)
            logs.append(RoundLog(r, c.client_id, "train",
                                 float(np.mean([s.reward_score for s in stats])),
                                 float(np.mean([s.price_score for s in stats])),
                                 float(np.mean([s.emission_score for s in stats]))))
        if average:
            avg = fed_avg([c.params for c in clients], fed_cfg.client_weights)
            for c in clients:
                c.params = avg

        for i, (sc, day) in enumerate(validation):
            params = clients[i % len(clients)].params
            rep = evaluate(params, [sc], [day], weights)[0]
            logs.append(RoundLog(r, sc.household_id, "validation", rep.reward_score,
                                 rep.price_score, rep.emission_score))
        log.info("round %d/%d done (%s)", r, fed_cfg.rounds, "federated" if average else "isolated")
        if on_round is not None:
            on_round(r, [c.params for c in clients])

    return TrainingResult(params=[c.params for c in clients], logs=logs, clients=clients)


def run_federated_training(clients: Sequence[ClientState], grid: GridConfig, train_cfg: TrainConfig,
                           fed_cfg: FederationConfig, seed: int,
                           weights: RewardWeights = RewardWeights(),
                           validation: Sequence[tuple[HouseholdScenario, DayData]] = (),
                           executor: Executor | None = None,
                           on_round: RoundHook | None = None) -> TrainingResult:
    """Local training between FedAvg barriers for ``fed_cfg.rounds`` rounds.

    ``validation`` pairs are evaluated with the averaged params after each
    round. ``on_round(round, params_per_client)`` runs after each barrier.
    """
    return _run(clients, grid, train_cfg, fed_cfg, seed, True, weights, validation, executor, on_round)


def run_isolated_training(clients: Sequence[ClientState], grid: GridConfig, train_cfg: TrainConfig,
                          fed_cfg: FederationConfig, seed: int,
                          weights: RewardWeights = RewardWeights(),
                          validation: Sequence[tuple[HouseholdScenario, DayData]] = (),
                          executor: Executor | None = None,
                          on_round: RoundHook | None = None) -> TrainingResult:
    """Same schedule as the federated run with the averaging step skipped.

    Validation household ``i`` is evaluated with client ``i mod n``'s params.
    """
    return _run(clients, grid, train_cfg, fed_cfg, seed, False, weights, validation, executor, on_round)
