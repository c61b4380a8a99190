"""Synthetic household and grid time series.

Every series is hourly (24 steps per day) and lives in [0, 1]. PV and load
carry Gaussian noise drawn from an explicitly passed ``numpy.random.Generator``;
grid price and carbon intensity are noiseless functions of the generation mix.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .env import HouseholdScenario

STEPS_PER_DAY = 24
PV_PEAK_STEP = 12

DAY_CSV_HEADER = ("t", "pv", "load", "price", "carbon")


class ProfileKind(str, Enum):
    FAMILY = "Family"
    TEENAGERS = "Teenagers"
    HOME_BUSINESS = "HomeBusiness"


# Hourly shapes of the variable part of residential demand. Each table has at
# least one 0 and one 1 entry so the constant floor and the peak are both hit.
BASE_LOAD_PROFILES: dict[ProfileKind, tuple[float, ...]] = {
    # morning peak at 7, evening peak at 19
    ProfileKind.FAMILY: (
        0.10, 0.05, 0.00, 0.00, 0.05, 0.20, 0.55, 1.00,
        0.70, 0.35, 0.25, 0.25, 0.30, 0.25, 0.20, 0.25,
        0.40, 0.65, 0.90, 1.00, 0.85, 0.60, 0.35, 0.20,
    ),
    # quiet mornings, high from 16 through the late evening
    ProfileKind.TEENAGERS: (
        0.45, 0.30, 0.15, 0.05, 0.00, 0.00, 0.05, 0.15,
        0.20, 0.15, 0.10, 0.15, 0.25, 0.30, 0.40, 0.60,
        0.85, 0.90, 0.95, 0.95, 1.00, 1.00, 0.95, 0.80,
    ),
    # office hours 9-17
    ProfileKind.HOME_BUSINESS: (
        0.05, 0.00, 0.00, 0.00, 0.00, 0.05, 0.15, 0.30,
        0.55, 0.85, 0.95, 1.00, 0.90, 0.95, 1.00, 0.95,
        0.90, 0.80, 0.45, 0.35, 0.30, 0.25, 0.15, 0.10,
    ),
}


def _default_gas_profile() -> tuple[float, ...]:
    # trapezoid: 0.2 overnight, ramp to 0.8 over steps 6-10, flat to 20, ramp down
    out = []
    for h in range(STEPS_PER_DAY):
        if h < 6:
            v = 0.2
        elif h <= 10:
            v = 0.2 + 0.6 * (h - 6) / 4
        elif h <= 20:
            v = 0.8
        else:
            v = 0.8 - 0.6 * (h - 20) / 4
        out.append(round(v, 12))
    return tuple(out)


DEFAULT_GAS_PROFILE = _default_gas_profile()


def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class PvConfig:
    peak: float = 0.8
    noise_mean: float = 0.0
    noise_std: float = 0.1

    def __post_init__(self):
        _check_unit("pv peak", self.peak)
        if self.noise_std < 0:
            raise ValueError(f"pv noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class LoadConfig:
    profile_kind: ProfileKind = ProfileKind.FAMILY
    peak: float = 0.8
    constant_fraction: float = 0.2
    noise_mean: float = 0.0
    noise_std: float = 0.01

    def __post_init__(self):
        try:
            kind = ProfileKind(self.profile_kind)
        except ValueError:
            raise ValueError(f"unknown load profile kind {self.profile_kind!r}") from None
        object.__setattr__(self, "profile_kind", kind)
        _check_unit("load peak", self.peak)
        _check_unit("constant_fraction", self.constant_fraction)
        if self.noise_std < 0:
            raise ValueError(f"load noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class GridConfig:
    nuclear_rate: float = 0.2
    nuclear_emission: float = 0.05
    gas_rate: float = 1.0
    gas_emission: float = 0.9
    nuclear_ratio: float = 0.5
    gas_profile: tuple[float, ...] = DEFAULT_GAS_PROFILE

    def __post_init__(self):
        object.__setattr__(self, "gas_profile", tuple(float(v) for v in self.gas_profile))
        for name in ("nuclear_rate", "nuclear_emission", "gas_rate", "gas_emission", "nuclear_ratio"):
            _check_unit(name, getattr(self, name))
        if len(self.gas_profile) != STEPS_PER_DAY:
            raise ValueError(f"gas_profile needs {STEPS_PER_DAY} entries, got {len(self.gas_profile)}")
        for h, v in enumerate(self.gas_profile):
            _check_unit(f"gas_profile[{h}]", v)
            if self.nuclear_ratio + v <= 0:
                raise ValueError(f"zero total generation at hour {h}")


@dataclass(frozen=True, eq=False)
class DayData:
    pv: np.ndarray
    load: np.ndarray
    price: np.ndarray
    carbon: np.ndarray
    _key: str = field(default="", init=False, repr=False)

    def __post_init__(self):
        arrays = {}
        for name in ("pv", "load", "price", "carbon"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
                raise ValueError(f"{name} values must lie in [0, 1]")
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        lengths = {a.size for a in arrays.values()}
        if len(lengths) != 1:
            raise ValueError(f"series lengths differ: {sorted(lengths)}")
        if self.T < 1:
            raise ValueError("a day needs at least one step")
        h = hashlib.sha256()
        for a in arrays.values():
            h.update(a.tobytes())
        object.__setattr__(self, "_key", h.hexdigest()[:16])

    @property
    def T(self) -> int:
        return int(self.pv.size)

    @property
    def key(self) -> str:
        """Content fingerprint; two days with equal keys are the same realization."""
        return self._key

    def __eq__(self, other):
        if not isinstance(other, DayData):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in DAY_CSV_HEADER[1:])

    __hash__ = None


def gaussian_noise(rng: np.random.Generator, n: int, mean: float, std: float) -> np.ndarray:
    """Box-Muller normal draws. Always consumes 2*ceil(n/2) uniforms."""
    pairs = (n + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return mean + std * z[:n]


def _check_T(T: int) -> None:
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")


def pv_base(peak: float, T: int) -> np.ndarray:
    hour = np.arange(T) % STEPS_PER_DAY
    return peak * np.maximum(0.0, np.sin(np.pi * hour / STEPS_PER_DAY))


def load_base(cfg: LoadConfig, T: int) -> np.ndarray:
    # variable part scaled by (1 - constant_fraction) so the noiseless peak is cfg.peak
    table = np.asarray(BASE_LOAD_PROFILES[cfg.profile_kind])
    shape = table[np.arange(T) % STEPS_PER_DAY]
    cf = cfg.constant_fraction
    return cfg.peak * (cf + (1.0 - cf) * shape)


def generate_pv(cfg: PvConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    _check_T(T)
    if cfg.noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    eps = gaussian_noise(rng, T, cfg.noise_mean, cfg.noise_std)
    return np.clip(pv_base(cfg.peak, T) + eps, 0.0, 1.0)


def generate_load(cfg: LoadConfig, T: int, rng: np.random.Generator) -> np.ndarray:
    _check_T(T)
    if cfg.profile_kind not in BASE_LOAD_PROFILES:
        raise ValueError(f"unknown load profile kind {cfg.profile_kind!r}")
    eps = gaussian_noise(rng, T, cfg.noise_mean, cfg.noise_std)
    return np.clip(load_base(cfg, T) + eps, 0.0, 1.0)


def nuclear_share(cfg: GridConfig, T: int) -> np.ndarray:
    gas = np.asarray(cfg.gas_profile)[np.arange(T) % STEPS_PER_DAY]
    total = cfg.nuclear_ratio + gas
    if np.any(total <= 0):
        raise ValueError("zero total generation at some step")
    return cfg.nuclear_ratio / total


def generate_grid(cfg: GridConfig, T: int) -> tuple[np.ndarray, np.ndarray]:
    _check_T(T)
    s = nuclear_share(cfg, T)
    price = s * cfg.nuclear_rate + (1.0 - s) * cfg.gas_rate
    carbon = s * cfg.nuclear_emission + (1.0 - s) * cfg.gas_emission
    # convex combinations; clip only absorbs last-ulp rounding
    return np.clip(price, 0.0, 1.0), np.clip(carbon, 0.0, 1.0)


def generate_day(scenario: HouseholdScenario, grid: GridConfig, T: int = STEPS_PER_DAY,
                 seed: int = 0) -> DayData:
    rng = np.random.default_rng(seed)
    pv = generate_pv(scenario.pv, T, rng)
    load = generate_load(scenario.load, T, rng)
    price, carbon = generate_grid(grid, T)
    return DayData(pv=pv, load=load, price=price, carbon=carbon)


def write_day_csv(day: DayData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DAY_CSV_HEADER)
        for t in range(day.T):
            w.writerow([t] + [f"{getattr(day, n)[t]:.6f}" for n in DAY_CSV_HEADER[1:]])


def read_day_csv(path: str | Path) -> DayData:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DAY_CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(DAY_CSV_HEADER)}")
        rows = list(reader)
    for i, row in enumerate(rows):
        if int(row["t"]) != i:
            raise ValueError(f"{path}: row {i} has t={row['t']}")
    cols = {n: [float(r[n]) for r in rows] for n in DAY_CSV_HEADER[1:]}
    return DayData(**cols)
