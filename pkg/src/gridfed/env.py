"""Episodic household battery environment.

A household has fixed PV and load for the day and a battery it may charge or
discharge once per step. Anything not covered locally is imported from the
grid; surplus is exported and credited at the same price and carbon intensity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datagen import STEPS_PER_DAY, DayData, LoadConfig, PvConfig
from .metrics import EpisodeReport, EpisodeTrace, score_episode

N_OBS = 7


@dataclass(frozen=True)
class BatteryConfig:
    capacity: float = 1.0
    max_power: float = 0.25
    charge_efficiency: float = 0.9
    discharge_efficiency: float = 0.9
    initial_soc: float = 0.5

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if not self.max_power > 0:
            raise ValueError("max_power must be positive")
        for name in ("charge_efficiency", "discharge_efficiency"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {eta}")
        if not 0.0 <= self.initial_soc <= 1.0:
            raise ValueError("initial_soc must lie in [0, 1]")


@dataclass(frozen=True)
class HouseholdScenario:
    household_id: int
    microgrid_id: int
    pv: PvConfig = field(default_factory=PvConfig)
    load: LoadConfig = field(default_factory=LoadConfig)
    battery: BatteryConfig = field(default_factory=BatteryConfig)


@dataclass(frozen=True)
class RewardWeights:
    price_weight: float = 1.0
    emission_weight: float = 1.0

    def __post_init__(self):
        if self.price_weight < 0 or self.emission_weight < 0:
            raise ValueError("reward weights must be non-negative")
        if self.price_weight == 0 and self.emission_weight == 0:
            raise ValueError("reward weights cannot both be zero")

    def step_weight(self, day: DayData) -> np.ndarray:
        """Per-step marginal cost of one unit of grid import."""
        return self.price_weight * day.price + self.emission_weight * day.carbon


@dataclass(frozen=True, slots=True)
class EnvState:
    t: int
    soc: float
    day: DayData


@dataclass(frozen=True, slots=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    grid_exchange: float
    cost: float
    emissions: float
    realized_action: float
    stored: float = 0.0
    delivered: float = 0.0


def reset(scenario: HouseholdScenario, day: DayData) -> EnvState:
    b = scenario.battery
    return EnvState(t=0, soc=b.initial_soc * b.capacity, day=day)


def observe(state: EnvState, battery: BatteryConfig) -> np.ndarray:
    """Feature vector ``[sin, cos, soc fraction, pv, load, price, carbon]``."""
    day, t = state.day, state.t
    if not 0 <= t < day.T:
        raise IndexError(f"no observation at t={t} for a {day.T}-step day")
    angle = 2.0 * math.pi * t / STEPS_PER_DAY
    return np.array([
        math.sin(angle), math.cos(angle), state.soc / battery.capacity,
        day.pv[t], day.load[t], day.price[t], day.carbon[t],
    ])


def step(state: EnvState, action: float, battery: BatteryConfig,
         weights: RewardWeights = RewardWeights()) -> StepOutcome:
    day, t, soc = state.day, state.t, state.soc
    if t >= day.T:
        raise RuntimeError("episode already finished")
    action = float(action)
    if not -1.0 <= action <= 1.0:
        raise ValueError(f"action must lie in [-1, 1], got {action}")

    p = action * battery.max_power
    stored = delivered = 0.0
    if p >= 0:
        eta = battery.charge_efficiency
        stored = min(p * eta, battery.capacity - soc)
        b = stored / eta
        soc_next = soc + stored
    else:
        eta = battery.discharge_efficiency
        delivered = min(-p * eta, soc * eta)
        b = -delivered
        soc_next = soc - delivered / eta
    # absorb last-ulp drift at the bounds
    soc_next = min(max(soc_next, 0.0), battery.capacity)

    g = day.load[t] - day.pv[t] + b
    cost = day.price[t] * g
    emissions = day.carbon[t] * g
    reward = -(weights.price_weight * cost + weights.emission_weight * emissions)
    realized = min(max(b / battery.max_power, -1.0), 1.0)
    return StepOutcome(
        next_state=EnvState(t=t + 1, soc=soc_next, day=day),
        reward=float(reward), grid_exchange=float(g), cost=float(cost),
        emissions=float(emissions), realized_action=realized,
        stored=stored, delivered=delivered,
    )


Policy = Callable[[EnvState], float]


def run_episode(scenario: HouseholdScenario, day: DayData, policy: Policy,
                weights: RewardWeights = RewardWeights()) -> EpisodeReport:
    battery = scenario.battery
    state = reset(scenario, day)
    T = day.T
    cols = {name: np.empty(T) for name in EpisodeTrace.COLUMNS if name != "t"}
    for t in range(T):
        a = policy(state)
        out = step(state, a, battery, weights)
        cols["action"][t] = a
        cols["realized_action"][t] = out.realized_action
        cols["soc"][t] = out.next_state.soc
        cols["grid_exchange"][t] = out.grid_exchange
        cols["price"][t] = day.price[t]
        cols["carbon"][t] = day.carbon[t]
        cols["cost"][t] = out.cost
        cols["emissions"][t] = out.emissions
        cols["reward"][t] = out.reward
        state = out.next_state
    trace = EpisodeTrace(t=np.arange(T), **cols)
    return make_report(scenario, day, trace, weights)


def make_report(scenario: HouseholdScenario, day: DayData, trace: EpisodeTrace,
                weights: RewardWeights) -> EpisodeReport:
    price_score, emission_score, reward_score = score_episode(trace, day.T, weights)
    return EpisodeReport(
        household_id=scenario.household_id,
        microgrid_id=scenario.microgrid_id,
        day_key=day.key,
        total_reward=float(trace.reward.sum()),
        price_score=price_score,
        emission_score=emission_score,
        reward_score=reward_score,
        trace=trace,
    )


def idle_policy(state: EnvState) -> float:
    """Never touch the battery: the no-battery base case."""
    return 0.0


def baseline_episode(scenario: HouseholdScenario, day: DayData,
                     weights: RewardWeights = RewardWeights()) -> EpisodeReport:
    return run_episode(scenario, day, idle_policy, weights)
