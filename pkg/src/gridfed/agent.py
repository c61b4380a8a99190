"""Advantage actor-critic over the household environment.

Actor and critic are separate tanh MLPs stored as flat float64 vectors so that
federated averaging is a plain vector operation. The actor emits the mean and
log-std of a Gaussian whose sample is squashed by tanh into [-1, 1].
Gradients are back-propagated by hand through the affine/tanh layers.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import env
from .datagen import DayData, GridConfig, generate_day
from .env import N_OBS, HouseholdScenario, RewardWeights
from .metrics import EpisodeReport

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
TANH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class NumericalError(RuntimeError):
    """Non-finite network output or parameters."""


@dataclass(frozen=True)
class NetLayout:
    input_dim: int = N_OBS
    hidden_dims: tuple[int, ...] = (64, 64)
    actor_output: int = 2
    critic_output: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ValueError("layer sizes must be positive")

    def shapes(self, out_dim: int) -> list[tuple[int, ...]]:
        dims = (self.input_dim,) + self.hidden_dims + (out_dim,)
        out = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            out += [(fan_out, fan_in), (fan_out,)]
        return out

    @property
    def actor_shapes(self):
        return self.shapes(self.actor_output)

    @property
    def critic_shapes(self):
        return self.shapes(self.critic_output)


def n_params(shapes) -> int:
    return sum(math.prod(s) for s in shapes)


@dataclass(frozen=True, eq=False)
class AgentParams:
    layout: NetLayout
    actor: np.ndarray
    critic: np.ndarray

    def __post_init__(self):
        for name, shapes in (("actor", self.layout.actor_shapes), ("critic", self.layout.critic_shapes)):
            v = np.array(getattr(self, name), dtype=np.float64).ravel()
            if v.size != n_params(shapes):
                raise ValueError(f"{name} vector has {v.size} entries, layout needs {n_params(shapes)}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.actor)) and np.all(np.isfinite(self.critic)))

    def __eq__(self, other):
        if not isinstance(other, AgentParams):
            return NotImplemented
        return (self.layout == other.layout and np.array_equal(self.actor, other.actor)
                and np.array_equal(self.critic, other.critic))

    __hash__ = None


def init_params(layout: NetLayout = NetLayout(), seed: int = 0) -> AgentParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)

    def build(shapes):
        parts = []
        for s in shapes:
            if len(s) == 2:
                fan_out, fan_in = s
                lim = math.sqrt(6.0 / (fan_in + fan_out))
                parts.append(rng.uniform(-lim, lim, size=s).ravel())
            else:
                parts.append(np.zeros(s))
        return np.concatenate(parts)

    return AgentParams(layout, build(layout.actor_shapes), build(layout.critic_shapes))


# ------------------------------------------------------------------ MLP core

def unpack(vec: np.ndarray, shapes) -> list[np.ndarray]:
    out, i = [], 0
    for s in shapes:
        k = math.prod(s)
        out.append(vec[i:i + k].reshape(s))
        i += k
    return out


def mlp_forward(vec: np.ndarray, shapes, X: np.ndarray):
    """Batch forward pass. Returns ``(output, activations)``."""
    mats = unpack(vec, shapes)
    acts = [X]
    h = X
    n_layers = len(mats) // 2
    for i in range(n_layers):
        W, b = mats[2 * i], mats[2 * i + 1]
        h = h @ W.T + b
        if i < n_layers - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(vec: np.ndarray, shapes, acts, dout: np.ndarray) -> np.ndarray:
    mats = unpack(vec, shapes)
    n_layers = len(mats) // 2
    grads: list[np.ndarray] = [None] * len(mats)  # type: ignore[list-item]
    delta = dout
    for i in range(n_layers - 1, -1, -1):
        grads[2 * i] = delta.T @ acts[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ mats[2 * i]) * (1.0 - acts[i] ** 2)
    return np.concatenate([g.ravel() for g in grads])


def policy_head(out: np.ndarray):
    mu = out[:, 0]
    raw = out[:, 1]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    return mu, raw, log_std


def squash_log_prob(z, mu, log_std):
    """Log-density of ``tanh(z)`` where ``z ~ N(mu, exp(log_std))``."""
    std = np.exp(log_std)
    gauss = -0.5 * ((z - mu) / std) ** 2 - log_std - HALF_LOG_2PI
    return gauss - np.log(1.0 - np.tanh(z) ** 2 + TANH_EPS)


def gaussian_entropy(log_std):
    return log_std + 0.5 + HALF_LOG_2PI


# ------------------------------------------------------------------- acting

@dataclass(frozen=True)
class ActResult:
    action: float
    pre_squash: float
    log_prob: float
    value: float


def act(params: AgentParams, obs: np.ndarray, rng: np.random.Generator | None = None,
        deterministic: bool = False) -> ActResult:
    """Sample (or, with ``deterministic``, take the mean of) the squashed policy."""
    X = np.asarray(obs, dtype=float).reshape(1, -1)
    if X.shape[1] != params.layout.input_dim:
        raise ValueError(f"observation has {X.shape[1]} features, layout expects {params.layout.input_dim}")
    out, _ = mlp_forward(params.actor, params.layout.actor_shapes, X)
    v, _ = mlp_forward(params.critic, params.layout.critic_shapes, X)
    if not (np.all(np.isfinite(out)) and np.all(np.isfinite(v))):
        raise NumericalError("non-finite network output")
    mu, _, log_std = policy_head(out)
    if deterministic:
        z = mu[0]
    else:
        if rng is None:
            raise ValueError("stochastic action needs a random generator")
        z = mu[0] + math.exp(log_std[0]) * rng.standard_normal()
    lp = squash_log_prob(np.array([z]), mu, log_std)[0]
    return ActResult(action=math.tanh(z), pre_squash=float(z), log_prob=float(lp), value=float(v[0, 0]))


# ----------------------------------------------------------------- learning

@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    entropy_coef: float = 1e-3
    episodes_per_update: int = 4
    grad_clip: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.episodes_per_update < 1:
            raise ValueError("episodes_per_update must be >= 1")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    observations: np.ndarray  # (T, input_dim)
    actions: np.ndarray
    pre_squash: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = len(self.rewards)
        if n == 0:
            raise ValueError("empty trajectory")
        for name in ("observations", "actions", "pre_squash", "log_probs", "values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trajectory field {name} has the wrong length")


def reward_to_go(rewards, gamma: float) -> np.ndarray:
    """Discounted sum of the current and all later rewards at each step."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("empty reward series")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


@dataclass(frozen=True)
class UpdateDiagnostics:
    actor_loss: float
    critic_loss: float
    actor_grad_norm: float
    critic_grad_norm: float
    mean_advantage: float
    applied: bool


@dataclass(frozen=True, eq=False)
class Batch:
    observations: np.ndarray
    pre_squash: np.ndarray
    returns: np.ndarray

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], gamma: float) -> Batch:
        if not trajectories:
            raise ValueError("need at least one trajectory")
        return cls(
            observations=np.vstack([tr.observations for tr in trajectories]),
            pre_squash=np.concatenate([tr.pre_squash for tr in trajectories]),
            returns=np.concatenate([reward_to_go(tr.rewards, gamma) for tr in trajectories]),
        )


def critic_loss_grad(params: AgentParams, batch: Batch):
    shapes = params.layout.critic_shapes
    out, acts = mlp_forward(params.critic, shapes, batch.observations)
    v = out[:, 0]
    diff = v - batch.returns
    n = diff.size
    loss = float(np.mean(diff ** 2))
    dout = (2.0 * diff / n)[:, None]
    return loss, mlp_backward(params.critic, shapes, acts, dout), v


def actor_loss_grad(params: AgentParams, batch: Batch, advantages: np.ndarray, entropy_coef: float):
    shapes = params.layout.actor_shapes
    out, acts = mlp_forward(params.actor, shapes, batch.observations)
    mu, raw, log_std = policy_head(out)
    z = batch.pre_squash
    n = z.size
    logp = squash_log_prob(z, mu, log_std)
    ent = gaussian_entropy(log_std)
    loss = float(-np.mean(logp * advantages) - entropy_coef * np.mean(ent))

    inv_var = np.exp(-2.0 * log_std)
    d_mu = -advantages * (z - mu) * inv_var / n
    d_logstd = (-advantages * ((z - mu) ** 2 * inv_var - 1.0) - entropy_coef) / n
    # clipped log-std passes no gradient outside its bounds
    d_raw = d_logstd * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
    dout = np.stack([d_mu, d_raw], axis=1)
    return loss, mlp_backward(params.actor, shapes, acts, dout)


def _clip(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


def a2c_update(params: AgentParams, trajectories: Sequence[Trajectory],
               cfg: TrainConfig = TrainConfig()) -> tuple[AgentParams, UpdateDiagnostics]:
    batch = Batch.from_trajectories(trajectories, cfg.gamma)
    # non-finite values are detected below and the update is skipped
    with np.errstate(invalid="ignore", over="ignore"):
        c_loss, c_grad, v = critic_loss_grad(params, batch)
        adv = batch.returns - v  # treated as a constant by the actor
        a_loss, a_grad = actor_loss_grad(params, batch, adv, cfg.entropy_coef)
        a_grad, a_norm = _clip(a_grad, cfg.grad_clip)
        c_grad, c_norm = _clip(c_grad, cfg.grad_clip)

    finite = all(math.isfinite(x) for x in (a_loss, c_loss, a_norm, c_norm))
    diag = UpdateDiagnostics(a_loss, c_loss, a_norm, c_norm,
                             float(np.mean(adv)) if finite else float("nan"), applied=finite)
    if not finite:
        return params, diag
    new = AgentParams(params.layout, params.actor - cfg.actor_lr * a_grad,
                      params.critic - cfg.critic_lr * c_grad)
    return new, diag


# ----------------------------------------------------------------- episodes

@dataclass
class EpisodeStats:
    reward_score: float
    price_score: float
    emission_score: float


def collect_episode(params: AgentParams, scenario: HouseholdScenario, day: DayData,
                    rng: np.random.Generator,
                    weights: RewardWeights = RewardWeights()) -> tuple[Trajectory, EpisodeReport]:
    T = day.T
    obs = np.empty((T, params.layout.input_dim))
    actions, pre, logps, values = (np.empty(T) for _ in range(4))

    def policy(state):
        t = state.t
        obs[t] = env.observe(state, scenario.battery)
        res = act(params, obs[t], rng)
        actions[t], pre[t], logps[t], values[t] = res.action, res.pre_squash, res.log_prob, res.value
        return res.action

    report = env.run_episode(scenario, day, policy, weights)
    traj = Trajectory(obs, actions, pre, logps, report.trace.reward.copy(), values)
    return traj, report


def train_episodes(params: AgentParams, scenario: HouseholdScenario, grid: GridConfig,
                   cfg: TrainConfig, n_episodes: int, rng: np.random.Generator,
                   weights: RewardWeights = RewardWeights(), T: int = 24):
    """Run ``n_episodes`` on freshly generated days, updating every few episodes.

    Returns ``(params, episode_stats, diagnostics)``. Raises NumericalError if
    the parameters stop being finite.
    """
    stats: list[EpisodeStats] = []
    diags: list[UpdateDiagnostics] = []
    pending: list[Trajectory] = []
    for ep in range(n_episodes):
        day = generate_day(scenario, grid, T, int(rng.integers(2 ** 63)))
        traj, rep = collect_episode(params, scenario, day, rng, weights)
        stats.append(EpisodeStats(rep.reward_score, rep.price_score, rep.emission_score))
        pending.append(traj)
        if len(pending) == cfg.episodes_per_update or ep == n_episodes - 1:
            params, d = a2c_update(params, pending, cfg)
            diags.append(d)
            pending = []
            if not d.applied or not params.is_finite():
                raise NumericalError(f"household {scenario.household_id}: update produced non-finite values")
    return params, stats, diags


def evaluate(params: AgentParams, scenarios: Sequence[HouseholdScenario], days: Sequence[DayData],
             weights: RewardWeights = RewardWeights()) -> list[EpisodeReport]:
    """Deterministic mean-action episodes, one per (scenario, day) pair."""
    if len(scenarios) != len(days):
        raise ValueError("one day per scenario required")
    if not params.is_finite():
        raise NumericalError("cannot evaluate non-finite parameters")
    reports = []
    for sc, day in zip(scenarios, days):
        def policy(state, sc=sc):
            return act(params, env.observe(state, sc.battery), deterministic=True).action
        reports.append(env.run_episode(sc, day, policy, weights))
    return reports


# ------------------------------------------------------------ serialization

TEXT_MAGIC = "gridfed-params v1"
BIN_MAGIC = b"GFP1"


def params_to_text(params: AgentParams) -> str:
    lay = params.layout
    lines = [
        TEXT_MAGIC,
        f"input_dim {lay.input_dim}",
        "hidden_dims " + " ".join(str(h) for h in lay.hidden_dims),
        f"actor_output {lay.actor_output}",
        f"critic_output {lay.critic_output}",
        f"actor {params.actor.size}",
    ]
    lines += [f"{v:.17g}" for v in params.actor]
    lines.append(f"critic {params.critic.size}")
    lines += [f"{v:.17g}" for v in params.critic]
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> AgentParams:
    lines = text.splitlines()
    if not lines or lines[0] != TEXT_MAGIC:
        raise ValueError("not a parameter file")

    def field_(i, name):
        key, _, rest = lines[i].partition(" ")
        if key != name:
            raise ValueError(f"line {i + 1}: expected {name!r}")
        return rest

    layout = NetLayout(
        input_dim=int(field_(1, "input_dim")),
        hidden_dims=tuple(int(x) for x in field_(2, "hidden_dims").split()),
        actor_output=int(field_(3, "actor_output")),
        critic_output=int(field_(4, "critic_output")),
    )
    na = int(field_(5, "actor"))
    actor = np.array([float(x) for x in lines[6:6 + na]])
    nc = int(field_(6 + na, "critic"))
    critic = np.array([float(x) for x in lines[7 + na:7 + na + nc]])
    if critic.size != nc:
        raise ValueError("truncated parameter file")
    return AgentParams(layout, actor, critic)


def params_to_bytes(params: AgentParams) -> bytes:
    lay = params.layout
    head = struct.pack("<4sIIII", BIN_MAGIC, lay.input_dim, len(lay.hidden_dims),
                       lay.actor_output, lay.critic_output)
    head += struct.pack(f"<{len(lay.hidden_dims)}I", *lay.hidden_dims)
    return head + params.actor.astype("<f8").tobytes() + params.critic.astype("<f8").tobytes()


def params_from_bytes(data: bytes) -> AgentParams:
    magic, ind, nh, ao, co = struct.unpack_from("<4sIIII", data, 0)
    if magic != BIN_MAGIC:
        raise ValueError("not a binary parameter blob")
    off = struct.calcsize("<4sIIII")
    hidden = struct.unpack_from(f"<{nh}I", data, off)
    off += 4 * nh
    layout = NetLayout(ind, hidden, ao, co)
    na, nc = n_params(layout.actor_shapes), n_params(layout.critic_shapes)
    vals = np.frombuffer(data, dtype="<f8", offset=off)
    if vals.size != na + nc:
        raise ValueError("parameter blob size does not match its layout")
    return AgentParams(layout, vals[:na].astype(np.float64), vals[na:].astype(np.float64))


def save_params(params: AgentParams, path: str | Path) -> None:
    Path(path).write_text(params_to_text(params))


def load_params(path: str | Path) -> AgentParams:
    return params_from_text(Path(path).read_text())
