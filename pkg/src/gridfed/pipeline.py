"""End-to-end orchestration: generate, train, baseline, evaluate, report.

All randomness is derived from ``RunConfig.seed``. Output layout under
``RunConfig.out``::

    config.json
    data/manifest.json, data/h000_d00.csv ...
    train/<mode>/round_log.csv, train/<mode>/checkpoints/*, train/<mode>/final*.params
    baseline/oracle_reports.csv, baseline/solutions/h000_d00.csv ...
    eval/base_reports.csv, eval/<mode>_reports.csv
    report/table.txt, report/table.csv, report/deltas.csv
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import Executor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agent, env, metrics, oracle
from .agent import AgentParams
from .config import RunConfig
from .datagen import DayData, generate_day, write_day_csv
from .env import HouseholdScenario
from .federation import (ClientState, FederationError, TrainingResult,
                         run_federated_training, run_isolated_training, write_round_logs)

log = logging.getLogger(__name__)

MODES = ("federated", "isolated")
EVAL_TAG = 0x45564C   # keeps evaluation days apart from training streams
INIT_TAG = 0x494E4954


class MissingArtifacts(FileNotFoundError):
    def __init__(self, names: list[str]):
        super().__init__("missing artifacts: " + ", ".join(names))
        self.names = names


def eval_day_seed(master: int, household_id: int, day_index: int) -> int:
    ss = np.random.SeedSequence([master, EVAL_TAG, household_id, day_index])
    return int(ss.generate_state(1, np.uint64)[0])


def eval_days(cfg: RunConfig, scenario: HouseholdScenario) -> list[tuple[int, DayData]]:
    return [(d, generate_day(scenario, cfg.grid, cfg.steps, eval_day_seed(cfg.seed, scenario.household_id, d)))
            for d in range(cfg.days)]


def initial_params(cfg: RunConfig) -> AgentParams:
    ss = np.random.SeedSequence([cfg.seed, INIT_TAG])
    return agent.init_params(cfg.layout, int(ss.generate_state(1, np.uint64)[0]))


def make_clients(cfg: RunConfig) -> list[ClientState]:
    p0 = initial_params(cfg)
    return [ClientState(client_id=h.household_id, params=p0, scenario=h) for h in cfg.split("train")]


def validation_pairs(cfg: RunConfig) -> list[tuple[HouseholdScenario, DayData]]:
    return [(h, eval_days(cfg, h)[0][1]) for h in cfg.split("validation")]


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _prepare(cfg: RunConfig, *parts: str) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        # the output location is left out so identical runs give identical trees
        settings = cfg.to_dict()
        del settings["out"]
        _dump_json(settings, out / "config.json")
        d = out.joinpath(*parts)
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write output directory {out}: {exc}") from exc
    return d


# ------------------------------------------------------------------ generate

def cmd_generate(cfg: RunConfig, days: int | None = None) -> Path:
    """Write one DayData CSV per household and day, plus a seed manifest."""
    days = cfg.days if days is None else days
    d = _prepare(cfg, "data")
    manifest = {"master_seed": cfg.seed, "steps": cfg.steps, "days": days, "files": []}
    for h in cfg.fleet:
        for i in range(days):
            seed = eval_day_seed(cfg.seed, h.household_id, i)
            name = f"h{h.household_id:03d}_d{i:02d}.csv"
            write_day_csv(generate_day(h, cfg.grid, cfg.steps, seed), d / name)
            manifest["files"].append({"file": name, "household_id": h.household_id,
                                      "microgrid_id": h.microgrid_id, "day": i, "seed": seed})
    _dump_json(manifest, d / "manifest.json")
    return d


# --------------------------------------------------------------------- train

def train(cfg: RunConfig, mode: str, executor: Executor | None = None,
          on_round=None) -> TrainingResult:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    run = run_federated_training if mode == "federated" else run_isolated_training
    return run(make_clients(cfg), cfg.grid, cfg.train, cfg.federation, cfg.seed, cfg.weights,
               validation_pairs(cfg), executor, on_round)


def _final_names(mode: str, client_ids: list[int]) -> list[str]:
    if mode == "federated":
        return ["final.params"]
    return [f"final_client_{cid:03d}.params" for cid in client_ids]


def cmd_train(cfg: RunConfig, mode: str, executor: Executor | None = None,
              checkpoint_every: int = 10) -> Path:
    """Train and persist round logs plus checkpoints.

    Federated checkpoints hold the averaged params; isolated ones hold one
    file per client. Checkpoints are written every ``checkpoint_every``
    rounds and after the last round; round 0 holds the initial params.
    """
    d = _prepare(cfg, "train", mode)
    ck = d / "checkpoints"
    ck.mkdir(exist_ok=True)
    client_ids = list(cfg.train_ids)
    rounds = cfg.federation.rounds

    def write_ck(r: int, params: list[AgentParams]):
        if mode == "federated":
            (ck / f"round_{r:04d}.bin").write_bytes(agent.params_to_bytes(params[0]))
        else:
            for cid, p in zip(client_ids, params):
                (ck / f"round_{r:04d}_client_{cid:03d}.bin").write_bytes(agent.params_to_bytes(p))

    def hook(r: int, params: list[AgentParams]):
        if r % checkpoint_every == 0 or r == rounds:
            write_ck(r, params)

    p0 = initial_params(cfg)
    write_ck(0, [p0] * len(client_ids))
    try:
        result = train(cfg, mode, executor, hook)
    except FederationError as exc:
        for name, p in zip(_final_names(mode, client_ids), exc.rollback):
            agent.save_params(p, d / name)
        (d / "ABORTED").write_text(f"{exc}\n")
        raise
    write_round_logs(result.logs, d / "round_log.csv")
    for name, p in zip(_final_names(mode, client_ids), result.params):
        agent.save_params(p, d / name)
    return d


def load_trained(cfg: RunConfig, mode: str) -> dict[int, AgentParams]:
    d = Path(cfg.out) / "train" / mode
    names = _final_names(mode, list(cfg.train_ids))
    missing = [str(Path("train") / mode / n) for n in names if not (d / n).exists()]
    if missing:
        raise MissingArtifacts(missing)
    if mode == "federated":
        p = agent.load_params(d / names[0])
        return {cid: p for cid in cfg.train_ids}
    return {cid: agent.load_params(d / n) for cid, n in zip(cfg.train_ids, names)}


# ------------------------------------------------------------------ baseline

def oracle_reports(cfg: RunConfig, scenarios, solutions_dir: Path | None = None) -> list[metrics.EpisodeReport]:
    reports = []
    for h in scenarios:
        for i, day in eval_days(cfg, h):
            sol = oracle.solve_lp(oracle.DispatchProblem(day, h.battery, cfg.weights))
            reports.append(oracle.replay(sol, h, day, cfg.weights))
            if solutions_dir is not None:
                oracle.write_solution_csv(sol, day, solutions_dir / f"h{h.household_id:03d}_d{i:02d}.csv")
    return reports


def cmd_baseline(cfg: RunConfig) -> Path:
    """Solve the perfect-foresight LP for every train and test household/day."""
    d = _prepare(cfg, "baseline")
    sol_dir = d / "solutions"
    sol_dir.mkdir(exist_ok=True)
    scen = cfg.split("train") + cfg.split("test")
    metrics.write_reports_csv(oracle_reports(cfg, scen, sol_dir), d / "oracle_reports.csv")
    return d


# ------------------------------------------------------------------ evaluate

def base_reports(cfg: RunConfig, scenarios) -> list[metrics.EpisodeReport]:
    return [env.baseline_episode(h, day, cfg.weights) for h in scenarios for _, day in eval_days(cfg, h)]


def policy_reports(cfg: RunConfig, params_by_client: dict[int, AgentParams], scenarios) -> list[metrics.EpisodeReport]:
    """Mean-action episodes. Households without their own agent use client ``i mod n``."""
    client_ids = list(cfg.train_ids)
    reports = []
    for i, h in enumerate(scenarios):
        if h.household_id in params_by_client:
            p = params_by_client[h.household_id]
        else:
            p = params_by_client[client_ids[i % len(client_ids)]]
        for _, day in eval_days(cfg, h):
            reports.extend(agent.evaluate(p, [h], [day], cfg.weights))
    return reports


def cmd_evaluate(cfg: RunConfig, modes=MODES) -> Path:
    trained = {m: load_trained(cfg, m) for m in modes}
    d = _prepare(cfg, "eval")
    scen = cfg.split("train") + cfg.split("test")
    metrics.write_reports_csv(base_reports(cfg, scen), d / "base_reports.csv")
    for m in modes:
        metrics.write_reports_csv(policy_reports(cfg, trained[m], scen), d / f"{m}_reports.csv")
    return d


# -------------------------------------------------------------------- report

REPORT_INPUTS = ("baseline/oracle_reports.csv", "eval/base_reports.csv",
                 "eval/isolated_reports.csv", "eval/federated_reports.csv")


def _by_split(cfg: RunConfig, reports):
    train_ids, test_ids = set(cfg.train_ids), set(cfg.test_ids)
    return {"train": [r for r in reports if r.household_id in train_ids],
            "test": [r for r in reports if r.household_id in test_ids]}


@dataclass
class ReportResult:
    table: metrics.ComparisonTable
    deltas: list[tuple[str, metrics.DeltaReport]]


def build_report(cfg: RunConfig) -> ReportResult:
    root = Path(cfg.out)
    missing = [n for n in REPORT_INPUTS if not (root / n).exists()]
    if missing:
        raise MissingArtifacts(missing)
    orc, base, iso, fed = (metrics.read_reports_csv(root / n) for n in REPORT_INPUTS)
    table = metrics.comparison_table(_by_split(cfg, orc), _by_split(cfg, iso), _by_split(cfg, fed))
    deltas = []
    for arm, reps in (("oracle", orc), ("isolated", iso), ("federated", fed)):
        for split, rs in _by_split(cfg, reps).items():
            if not rs:
                continue
            bs = _by_split(cfg, base)[split]
            deltas += [(f"{arm}/{split}", d) for d in metrics.delta_hierarchy(bs, rs)]
    return ReportResult(table, deltas)


def cmd_report(cfg: RunConfig) -> Path:
    res = build_report(cfg)
    d = _prepare(cfg, "report")
    (d / "table.txt").write_text(res.table.format_text())
    (d / "table.csv").write_text(res.table.to_csv())
    metrics.write_deltas_csv(res.deltas, d / "deltas.csv")
    return d


def run_all(cfg: RunConfig, executor: Executor | None = None) -> Path:
    cmd_generate(cfg)
    for m in MODES:
        cmd_train(cfg, m, executor)
    cmd_baseline(cfg)
    cmd_evaluate(cfg)
    return cmd_report(cfg)
