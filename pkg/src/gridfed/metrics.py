"""Episode scores, base-vs-controlled deltas and their aggregation.

Scores are per-step means of ``price_t * g_t`` and ``carbon_t * g_t`` where
``g_t`` is the grid exchange (positive = import). A delta is the base score
minus the controlled score, so positive values mean the controller helped.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class EpisodeTrace:
    t: np.ndarray
    action: np.ndarray
    realized_action: np.ndarray
    soc: np.ndarray  # state of charge after the step
    grid_exchange: np.ndarray
    price: np.ndarray
    carbon: np.ndarray
    cost: np.ndarray
    emissions: np.ndarray
    reward: np.ndarray

    COLUMNS = ("t", "action", "realized_action", "soc", "grid_exchange",
               "price", "carbon", "cost", "emissions", "reward")

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for i in range(len(self)):
                w.writerow([int(self.t[i])] + [repr(float(getattr(self, c)[i])) for c in self.COLUMNS[1:]])

    @classmethod
    def from_csv(cls, path: str | Path) -> EpisodeTrace:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != cls.COLUMNS:
                raise ValueError(f"{path}: unexpected trace header")
            rows = list(reader)
        cols = {c: np.array([float(r[c]) for r in rows]) for c in cls.COLUMNS[1:]}
        return cls(t=np.array([int(r["t"]) for r in rows]), **cols)


@dataclass(frozen=True, eq=False)
class EpisodeReport:
    household_id: int
    microgrid_id: int
    day_key: str
    total_reward: float
    price_score: float
    emission_score: float
    reward_score: float
    trace: EpisodeTrace | None = None

    def objective(self, price_weight: float = 1.0, emission_weight: float = 1.0) -> float:
        """Weighted per-step cost; the quantity the controllers minimise."""
        return price_weight * self.price_score + emission_weight * self.emission_score


SUMMARY_COLUMNS = ("household_id", "microgrid_id", "day_key", "total_reward",
                   "price_score", "emission_score", "reward_score")


def score_episode(trace: EpisodeTrace, T: int, weights=None,
                  normalizer: float | None = None) -> tuple[float, float, float]:
    """Return ``(price_score, emission_score, reward)`` for a complete trace.

    ``normalizer`` defaults to ``T`` (per-step means).
    """
    if len(trace) != T:
        raise ValueError(f"incomplete trace: {len(trace)} of {T} steps")
    wp = 1.0 if weights is None else weights.price_weight
    we = 1.0 if weights is None else weights.emission_weight
    n = float(T if normalizer is None else normalizer)
    price_score = float(np.dot(trace.price, trace.grid_exchange) / n)
    emission_score = float(np.dot(trace.carbon, trace.grid_exchange) / n)
    reward = -(wp * n * price_score + we * n * emission_score) / n
    return price_score, emission_score, float(reward)


def write_reports_csv(reports: Iterable[EpisodeReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in reports:
            w.writerow([r.household_id, r.microgrid_id, r.day_key, repr(r.total_reward),
                        repr(r.price_score), repr(r.emission_score), repr(r.reward_score)])


def read_reports_csv(path: str | Path) -> list[EpisodeReport]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"{path}: unexpected report header")
        return [
            EpisodeReport(
                household_id=int(r["household_id"]), microgrid_id=int(r["microgrid_id"]),
                day_key=r["day_key"], total_reward=float(r["total_reward"]),
                price_score=float(r["price_score"]), emission_score=float(r["emission_score"]),
                reward_score=float(r["reward_score"]),
            )
            for r in reader
        ]


class Level(str, Enum):
    HOUSEHOLD = "Household"
    MICROGRID = "Microgrid"
    DISTRIBUTOR = "Distributor"


@dataclass(frozen=True)
class DeltaReport:
    level: Level
    id: int
    p_delta: float
    c_delta: float
    n_households: int = 1
    microgrid_id: int | None = None


def delta(base: EpisodeReport, treated: EpisodeReport) -> DeltaReport:
    """Base score minus treated score for one household on one day."""
    if base.household_id != treated.household_id:
        raise ValueError("delta needs reports for the same household")
    if base.day_key != treated.day_key:
        raise ValueError(
            f"household {base.household_id}: reports come from different day realizations")
    return DeltaReport(
        level=Level.HOUSEHOLD, id=base.household_id,
        p_delta=base.price_score - treated.price_score,
        c_delta=base.emission_score - treated.emission_score,
        n_households=1, microgrid_id=base.microgrid_id,
    )


def aggregate(deltas: Sequence[DeltaReport], level: Level | str,
              weights: Sequence[float] | None = None) -> DeltaReport:
    """Collapse member deltas into one report at ``level``.

    Microgrid level expects household deltas of a single microgrid. Distributor
    level accepts household or microgrid deltas; members are weighted by their
    household count (times ``weights`` if given, e.g. energy shares).
    """
    level = Level(level)
    if not deltas:
        raise ValueError("cannot aggregate an empty set of deltas")
    if level is Level.HOUSEHOLD:
        if len(deltas) != 1:
            raise ValueError("household level takes exactly one delta")
        return deltas[0]
    if level is Level.MICROGRID:
        if any(d.level is not Level.HOUSEHOLD for d in deltas):
            raise ValueError("microgrid aggregation takes household deltas")
        mg = {d.microgrid_id for d in deltas}
        if len(mg) != 1:
            raise ValueError(f"deltas span several microgrids: {sorted(mg, key=str)}")
        agg_id = mg.pop()
    else:
        if any(d.level is Level.DISTRIBUTOR for d in deltas):
            raise ValueError("distributor aggregation takes household or microgrid deltas")
        agg_id = 0

    w = np.array([d.n_households for d in deltas], dtype=float)
    if weights is not None:
        if len(weights) != len(deltas):
            raise ValueError("one weight per delta required")
        w = w * np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise ValueError("aggregation weights sum to zero")
    p = float(np.dot(w, [d.p_delta for d in deltas]) / w.sum())
    c = float(np.dot(w, [d.c_delta for d in deltas]) / w.sum())
    return DeltaReport(level=level, id=agg_id, p_delta=p, c_delta=c,
                       n_households=int(sum(d.n_households for d in deltas)),
                       microgrid_id=agg_id if level is Level.MICROGRID else None)


def aggregate_by_microgrid(deltas: Sequence[DeltaReport]) -> list[DeltaReport]:
    groups: dict[int, list[DeltaReport]] = defaultdict(list)
    for d in deltas:
        groups[d.microgrid_id].append(d)
    return [aggregate(groups[k], Level.MICROGRID) for k in sorted(groups)]


def delta_hierarchy(base: Sequence[EpisodeReport], treated: Sequence[EpisodeReport]) -> list[DeltaReport]:
    """Household, microgrid and distributor deltas for paired report lists.

    Several days for one household are averaged into a single household delta.
    """
    by_key = {(r.household_id, r.day_key): r for r in base}
    per_house: dict[int, list[DeltaReport]] = defaultdict(list)
    for r in treated:
        b = by_key.get((r.household_id, r.day_key))
        if b is None:
            raise ValueError(f"no base report for household {r.household_id} day {r.day_key}")
        per_house[r.household_id].append(delta(b, r))
    if len(per_house) != len({r.household_id for r in base}):
        raise ValueError("base and treated cover different households")
    households = []
    for hid in sorted(per_house):
        ds = per_house[hid]
        households.append(DeltaReport(
            level=Level.HOUSEHOLD, id=hid,
            p_delta=float(np.mean([d.p_delta for d in ds])),
            c_delta=float(np.mean([d.c_delta for d in ds])),
            microgrid_id=ds[0].microgrid_id,
        ))
    microgrids = aggregate_by_microgrid(households)
    return households + microgrids + [aggregate(households, Level.DISTRIBUTOR)]


DELTA_COLUMNS = ("arm", "level", "id", "microgrid_id", "n_households", "p_delta", "c_delta")


def write_deltas_csv(rows: Iterable[tuple[str, DeltaReport]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DELTA_COLUMNS)
        for arm, d in rows:
            w.writerow([arm, d.level.value, d.id, "" if d.microgrid_id is None else d.microgrid_id,
                        d.n_households, repr(d.p_delta), repr(d.c_delta)])


def read_deltas_csv(path: str | Path) -> list[tuple[str, DeltaReport]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DELTA_COLUMNS:
            raise ValueError(f"{path}: unexpected delta header")
        return [
            (r["arm"], DeltaReport(
                level=Level(r["level"]), id=int(r["id"]),
                p_delta=float(r["p_delta"]), c_delta=float(r["c_delta"]),
                n_households=int(r["n_households"]),
                microgrid_id=int(r["microgrid_id"]) if r["microgrid_id"] else None))
            for r in reader
        ]


# ---------------------------------------------------------------- comparison

ARM_LABELS = ("LP oracle", "A2C isolated", "A2C federated")

ROW_SPECS = (
    ("Train reward", "train", "reward_score"),
    ("Train price score", "train", "price_score"),
    ("Train emission score", "train", "emission_score"),
    ("Test price score", "test", "price_score"),
    ("Test emission score", "test", "emission_score"),
)


@dataclass(frozen=True)
class ComparisonTable:
    columns: tuple[str, ...]
    rows: tuple[tuple[str, tuple[float, ...]], ...]

    def row(self, label: str) -> tuple[float, ...]:
        for name, values in self.rows:
            if name == label:
                return values
        raise KeyError(label)

    def format_text(self) -> str:
        width = max(len(r[0]) for r in self.rows) if self.rows else 10
        colw = max(14, *(len(c) for c in self.columns))
        lines = [" " * width + "".join(f"  {c:>{colw}}" for c in self.columns)]
        lines.append("-" * len(lines[0]))
        for name, values in self.rows:
            lines.append(f"{name:<{width}}" + "".join(f"  {v:>{colw}.4f}" for v in values))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric",) + self.columns)
        for name, values in self.rows:
            w.writerow((name,) + tuple(repr(v) for v in values))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ComparisonTable:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        return cls(columns=tuple(header[1:]),
                   rows=tuple((r[0], tuple(float(v) for v in r[1:])) for r in body))


Arm = Mapping[str, Sequence[EpisodeReport]]


def _pairing(arm: Arm, split: str) -> list[tuple[int, str]]:
    return sorted((r.household_id, r.day_key) for r in arm.get(split, ()))


def comparison_table(oracle_reports: Arm, isolated_reports: Arm, federated_reports: Arm,
                     labels: Sequence[str] = ARM_LABELS) -> ComparisonTable:
    """Average scores per arm in the train/test row layout.

    Each arm maps a split name (``"train"``, ``"test"``) to its reports.
    Test rows are omitted when no arm has test reports.
    """
    arms = (oracle_reports, isolated_reports, federated_reports)
    for split in ("train", "test"):
        ref = _pairing(arms[0], split)
        for label, arm in zip(labels[1:], arms[1:]):
            if _pairing(arm, split) != ref:
                raise ValueError(f"arm {label!r} does not match the oracle's {split} households/days")
    if not arms[0].get("train"):
        raise ValueError("comparison needs train reports")
    has_test = bool(arms[0].get("test"))
    rows = []
    for name, split, attr in ROW_SPECS:
        if split == "test" and not has_test:
            continue
        rows.append((name, tuple(float(np.mean([getattr(r, attr) for r in arm[split]])) for arm in arms)))
    return ComparisonTable(columns=tuple(labels), rows=tuple(rows))
