"""Perfect-foresight battery dispatch.

``solve_lp`` gives the exact optimum of the day's weighted grid cost via the
bundled simplex. ``solve_dp`` is an independent backward dynamic program over
a discretised state of charge; it can only do as well as the LP and converges
to it as the grid is refined.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env
from .datagen import DayData
from .env import BatteryConfig, HouseholdScenario, RewardWeights
from .metrics import EpisodeReport
from .simplex import simplex_max

REPLAY_TOL = 1e-9


class ReplayMismatch(AssertionError):
    """Environment accounting disagrees with the dispatch solution."""


@dataclass(frozen=True)
class DispatchProblem:
    day: DayData
    battery: BatteryConfig = BatteryConfig()
    weights: RewardWeights = RewardWeights()


@dataclass(frozen=True, eq=False)
class DispatchSolution:
    charge: np.ndarray       # grid-side energy drawn into the battery
    discharge: np.ndarray    # household-side energy delivered by the battery
    soc: np.ndarray          # T + 1 entries, soc[0] is the initial state
    objective: float
    equivalent_actions: np.ndarray
    step_cost: np.ndarray

    @property
    def grid_exchange_delta(self) -> np.ndarray:
        return self.charge - self.discharge


def _finish(problem: DispatchProblem, charge, discharge) -> DispatchSolution:
    bat, day = problem.battery, problem.day
    eta_c, eta_d = bat.charge_efficiency, bat.discharge_efficiency
    charge = np.maximum(np.asarray(charge, dtype=float), 0.0)
    discharge = np.maximum(np.asarray(discharge, dtype=float), 0.0)

    # merge simultaneous charge and discharge into the single net move with the
    # same soc change; never worse, and representable as one env action
    net = eta_c * charge - discharge / eta_d
    both = (charge > 0) & (discharge > 0)
    charge = np.where(both, np.where(net >= 0, net / eta_c, 0.0), charge)
    discharge = np.where(both, np.where(net < 0, -net * eta_d, 0.0), discharge)

    soc = np.empty(day.T + 1)
    soc[0] = bat.initial_soc * bat.capacity
    for t in range(day.T):
        soc[t + 1] = min(max(soc[t] + eta_c * charge[t] - discharge[t] / eta_d, 0.0), bat.capacity)

    actions = np.where(charge > 0, charge / bat.max_power, -discharge / (bat.max_power * eta_d))
    actions = np.clip(actions, -1.0, 1.0)
    w = problem.weights.step_weight(day)
    g = day.load - day.pv + charge - discharge
    step_cost = w * g
    return DispatchSolution(charge=charge, discharge=discharge, soc=soc,
                            objective=float(step_cost.sum()),
                            equivalent_actions=actions, step_cost=step_cost)


def lp_matrices(problem: DispatchProblem):
    """Inequality form ``A x <= b`` over ``x = [charge_0..T-1, discharge_0..T-1]``.

    The state of charge is eliminated: ``soc_{t+1} = soc_0 + sum_{k<=t}
    (eta_c c_k - d_k / eta_d)`` must stay within ``[0, capacity]``.
    Returns ``(c, A, b)`` for maximisation of ``c @ x``.
    """
    bat, T = problem.battery, problem.day.T
    eta_c, eta_d = bat.charge_efficiency, bat.discharge_efficiency
    soc0 = bat.initial_soc * bat.capacity
    w = problem.weights.step_weight(problem.day)

    lower = np.tril(np.ones((T, T)))
    cum = np.hstack([eta_c * lower, -lower / eta_d])
    eye = np.eye(2 * T)
    A = np.vstack([eye, cum, -cum])
    b = np.concatenate([
        np.full(T, bat.max_power),
        np.full(T, bat.max_power * eta_d),
        np.full(T, bat.capacity - soc0),
        np.full(T, soc0),
    ])
    # minimise w @ (c - d)  <=>  maximise -w @ c + w @ d
    c = np.concatenate([-w, w])
    return c, A, b


def solve_lp(problem: DispatchProblem) -> DispatchSolution:
    T = problem.day.T
    c, A, b = lp_matrices(problem)
    res = simplex_max(c, A, b)
    sol = _finish(problem, res.x[:T], res.x[T:])
    baseline = float(problem.weights.step_weight(problem.day) @ (problem.day.load - problem.day.pv))
    # c = d = 0 is feasible, so the optimum can never exceed the idle cost
    if sol.objective > baseline + 1e-9:
        raise RuntimeError(f"LP returned {sol.objective} above the idle cost {baseline}")
    return sol


def solve_dp(problem: DispatchProblem, soc_grid_points: int = 201) -> DispatchSolution:
    if soc_grid_points < 2:
        raise ValueError("soc_grid_points must be >= 2")
    bat, day = problem.battery, problem.day
    eta_c, eta_d = bat.charge_efficiency, bat.discharge_efficiency
    T = day.T
    levels = np.linspace(0.0, bat.capacity, soc_grid_points)
    soc0 = bat.initial_soc * bat.capacity
    w = problem.weights.step_weight(day)
    net = day.load - day.pv
    slack = 1e-12 * max(1.0, bat.capacity)

    def moves(start: np.ndarray):
        # energy exchanged with the grid for every start -> level transition
        dsoc = levels[None, :] - start[:, None]
        charge = np.where(dsoc > 0, dsoc / eta_c, 0.0)
        discharge = np.where(dsoc < 0, -dsoc * eta_d, 0.0)
        ok = (charge <= bat.max_power + slack) & (discharge <= bat.max_power * eta_d + slack)
        return charge, discharge, ok

    ch_grid, dis_grid, ok_grid = moves(levels)
    value = np.zeros(soc_grid_points)
    choice = np.zeros((T, soc_grid_points), dtype=int)
    for t in range(T - 1, 0, -1):
        q = w[t] * (net[t] + ch_grid - dis_grid) + value[None, :]
        q[~ok_grid] = np.inf
        choice[t] = np.argmin(q, axis=1)
        value = q[np.arange(soc_grid_points), choice[t]]

    # first step leaves from the exact initial soc, which may sit off-grid
    ch0, dis0, ok0 = moves(np.array([soc0]))
    q0 = w[0] * (net[0] + ch0[0] - dis0[0]) + (value if T > 1 else 0.0)
    q0[~ok0[0]] = np.inf
    j = int(np.argmin(q0))

    charge = np.zeros(T)
    discharge = np.zeros(T)
    charge[0], discharge[0] = ch0[0, j], dis0[0, j]
    for t in range(1, T):
        k = int(choice[t, j])
        charge[t], discharge[t] = ch_grid[j, k], dis_grid[j, k]
        j = k
    return _finish(problem, charge, discharge)


def replay(solution: DispatchSolution, scenario: HouseholdScenario, day: DayData,
           weights: RewardWeights = RewardWeights()) -> EpisodeReport:
    """Run the dispatch through the environment and check the accounting."""
    if solution.equivalent_actions.size != day.T:
        raise ValueError("solution length does not match the day")
    actions = solution.equivalent_actions
    report = env.run_episode(scenario, day, lambda s: float(actions[s.t]), weights)
    expected = day.load - day.pv + solution.charge - solution.discharge
    gap = np.abs(report.trace.grid_exchange - expected)
    if gap.max(initial=0.0) > REPLAY_TOL:
        t = int(gap.argmax())
        raise ReplayMismatch(
            f"household {scenario.household_id}: grid exchange differs by {gap[t]:.3e} at t={t}")
    return report


SOLUTION_COLUMNS = ("t", "charge", "discharge", "soc", "action", "price", "carbon", "step_cost")


def write_solution_csv(solution: DispatchSolution, day: DayData, path: str | Path) -> None:
    """One row per step; ``soc`` is the state of charge after the step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOLUTION_COLUMNS)
        for t in range(day.T):
            w.writerow([t] + [repr(float(v)) for v in (
                solution.charge[t], solution.discharge[t], solution.soc[t + 1],
                solution.equivalent_actions[t], day.price[t], day.carbon[t], solution.step_cost[t])])


def read_solution_csv(path: str | Path, initial_soc: float) -> DispatchSolution:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SOLUTION_COLUMNS:
            raise ValueError(f"{path}: unexpected solution header")
        rows = list(reader)
    col = {c: np.array([float(r[c]) for r in rows]) for c in SOLUTION_COLUMNS[1:]}
    return DispatchSolution(
        charge=col["charge"], discharge=col["discharge"],
        soc=np.concatenate([[initial_soc], col["soc"]]),
        objective=float(col["step_cost"].sum()),
        equivalent_actions=col["action"], step_cost=col["step_cost"],
    )
