"""InterQ trainer: deep Q-learning of the scheduling policy on the error MDP."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .env import ErrorInit, Transition, env_step, reset_error, sample_noise
from .errors import (
    BufferNotReady,
    CorruptCheckpoint,
    Divergence,
    IncompatibleCheckpoint,
    ValidationError,
    VersionMismatch,
)
from .model import LemmaBounds, RiccatiSolution, SystemModel, lemma_bounds, system_digest
from .nn import AdamState, LossSpec, MlpParams, adam_step, backward, forward, init_mlp

CHECKPOINT_VERSION = 1
DIVERGENCE_LOSS = 1e12
LOG_HEADER = ("episode", "steps", "epsilon", "mean_loss", "episode_cost", "transmissions")


class LambdaMismatchWarning(UserWarning):
    pass


@dataclass
class Batch:
    e: np.ndarray
    a: np.ndarray
    c: np.ndarray
    e_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.a)


class ReplayBuffer:
    """FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, n_x: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.e = np.zeros((capacity, n_x))
        self.a = np.zeros(capacity, dtype=np.int8)
        self.c = np.zeros(capacity)
        self.e_next = np.zeros((capacity, n_x))
        self.terminal = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.fill = 0

    def __len__(self):
        return self.fill

    def push(self, t) -> None:
        i = self.cursor
        self.e[i] = t.e
        self.a[i] = t.a
        self.c[i] = t.c
        self.e_next[i] = t.e_next
        self.terminal[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.fill = min(self.fill + 1, self.capacity)

    def is_ready(self, b: int) -> bool:
        """Training guard: strictly more stored transitions than the batch size."""
        return self.fill > b

    def _take(self, idx) -> Batch:
        return Batch(self.e[idx], self.a[idx], self.c[idx], self.e_next[idx], self.terminal[idx])

    def sample(self, b: int, rng: np.random.Generator) -> Batch:
        """``b`` distinct transitions chosen uniformly at random."""
        if b < 1 or self.fill < b:
            raise BufferNotReady(f"cannot draw {b} distinct transitions from {self.fill}")
        return self._take(rng.choice(self.fill, size=b, replace=False))

    def contents(self) -> Batch:
        """Stored transitions, oldest first."""
        if self.fill < self.capacity:
            idx = np.arange(self.fill)
        else:
            idx = (np.arange(self.capacity) + self.cursor) % self.capacity
        return self._take(idx)


def epsilon_greedy_action(net: MlpParams, e, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(2))
    q = forward(net, e)
    return int(q[1] < q[0])


def compute_targets(batch: Batch, target_net: MlpParams, gamma: float) -> np.ndarray:
    """Bootstrapped targets ``c + gamma * min_a Q'(e', a)``; terminal rows get ``c``."""
    q_next = forward(target_net, batch.e_next).min(axis=1)
    return np.where(batch.terminal, batch.c, batch.c + gamma * q_next)


def default_e0_init(b: LemmaBounds) -> ErrorInit:
    """Box wide enough that episodes start on both sides of the outer bound.

    The half-width is taken along the most sensitive direction of
    ``A' Γ A`` since that matrix is singular whenever ``B`` has fewer
    columns than there are states.
    """
    top = float(np.linalg.eigvalsh(b.shape)[-1])
    if b.c_outer <= 0.0 or top <= 0.0:
        return ErrorInit("box", 10.0)
    return ErrorInit("box", 1.5 * math.sqrt(b.c_outer / top))


@dataclass
class TrainConfig:
    episodes: int = 500
    T: int = 100
    lr: float = 0.01
    batch: int = 16
    capacity: int = 1000
    eps_start: float = 1.0
    eps_min: float = 0.01
    eps_decay: float = 0.995
    f_target: int = 10
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    e0_init: Optional[ErrorInit] = None
    gamma: Optional[float] = None
    hidden: Tuple[int, ...] = (100, 100, 100, 100)
    guard: Optional[float] = 10.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.batch > self.capacity:
            raise ValidationError("batch size must not exceed replay capacity")
        if not 0.0 < self.eps_decay <= 1.0:
            raise ValidationError("eps_decay must lie in (0, 1]")
        if not 0.0 <= self.eps_min <= self.eps_start:
            raise ValidationError("need 0 <= eps_min <= eps_start")
        if self.T < 1 or self.episodes < 0 or self.f_target < 1 or self.batch < 1:
            raise ValidationError("T, f_target and batch must be >= 1")

    def epsilon_after(self, steps: int) -> float:
        return max(self.eps_min, self.eps_start * self.eps_decay**steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        d["e0_init"] = self.e0_init.to_dict() if self.e0_init else None
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown training keys: {', '.join(sorted(unknown))}")
        if "loss" in d:
            d["loss"] = LossSpec.from_dict(d["loss"]) if isinstance(d["loss"], dict) else LossSpec(d["loss"])
        if d.get("e0_init") is not None:
            d["e0_init"] = ErrorInit.from_dict(d["e0_init"])
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class Checkpoint:
    params: MlpParams
    meta: Dict[str, Any]
    activation: str = "gelu"
    version: int = CHECKPOINT_VERSION

    def to_dict(self) -> dict:
        weights = [W.tolist() for W in self.params.weights]
        biases = [b.tolist() for b in self.params.biases]
        return {
            "version": self.version,
            "layer_dims": list(self.params.layer_dims),
            "activation": self.activation,
            "weights": weights,
            "biases": biases,
            "param_digest": _param_digest(weights, biases),
            "meta": self.meta,
        }


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    epsilon: float
    mean_loss: float
    episode_cost: float
    transmissions: int


def _param_digest(weights, biases) -> str:
    blob = json.dumps([weights, biases], separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def train_interq(
    m: SystemModel,
    sol: RiccatiSolution,
    cfg: TrainConfig,
    on_episode=None,
    probe=None,
) -> Tuple[Checkpoint, List[EpisodeLog]]:
    """Run the InterQ double loop and return the trained network plus its log.

    The run is a pure function of ``(m, sol, cfg)``. ``on_episode`` is called
    with each :class:`EpisodeLog` as it is produced; ``probe(episode, net,
    target, buffer)`` sees the live training state after each episode and
    must not modify it.

    Raises:
        Divergence: when an episode's mean loss exceeds 1e12 or turns NaN.
    """
    if cfg.gamma is not None and cfg.gamma != m.gamma:
        raise ValidationError(f"config gamma {cfg.gamma} differs from system gamma {m.gamma}")
    n = m.n_x
    bounds = lemma_bounds(m, sol)
    init = cfg.e0_init or default_e0_init(bounds)
    guard_level = np.inf if cfg.guard is None else cfg.guard * max(bounds.c_outer, sol.trace_gamma_kw)
    s_net, s_env, s_explore, s_replay = np.random.SeedSequence(cfg.seed).spawn(4)
    env_rng = np.random.default_rng(s_env)
    explore_rng = np.random.default_rng(s_explore)
    replay_rng = np.random.default_rng(s_replay)

    net = init_mlp((n, *cfg.hidden, 2), int(s_net.generate_state(1)[0]))
    target = net.copy()
    adam = AdamState.fresh(net)
    buf = ReplayBuffer(cfg.capacity, n)
    steps = 0
    eps = cfg.eps_start
    log: List[EpisodeLog] = []

    for episode in range(1, cfg.episodes + 1):
        e = reset_error(init, n, env_rng)
        losses = []
        cost = 0.0
        sent = 0
        for k in range(cfg.T):
            a = epsilon_greedy_action(net, e, eps, explore_rng)
            if float(e @ bounds.shape @ e) > guard_level:
                a = 1
            w = sample_noise(m.noise, env_rng)
            e_next, c = env_step(e, a, w, sol, m)
            buf.push(Transition(e, a, c, e_next, k == cfg.T - 1))
            if buf.is_ready(cfg.batch):
                batch = buf.sample(cfg.batch, replay_rng)
                y = compute_targets(batch, target, m.gamma)
                grads, value = backward(net, batch.e, batch.a, y, cfg.loss)
                net, adam = adam_step(net, grads, adam, cfg.lr)
                losses.append(value)
            steps += 1
            eps = cfg.epsilon_after(steps)
            cost += c
            sent += a
            e = e_next
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        if losses and not mean_loss <= DIVERGENCE_LOSS:
            raise Divergence(f"episode {episode}: mean loss {mean_loss:.3g} exceeds {DIVERGENCE_LOSS:g}")
        if episode % cfg.f_target == 0:
            target = net.copy()
        entry = EpisodeLog(episode, steps, eps, mean_loss, cost, sent)
        log.append(entry)
        if on_episode is not None:
            on_episode(entry)
        if probe is not None:
            probe(episode, net, target, buf)

    meta = {
        "system_digest": system_digest(m),
        "lambda": m.lam,
        "gamma": m.gamma,
        "seed": cfg.seed,
        "episodes": cfg.episodes,
        "e0_init": init.to_dict(),
        "code_version": __version__,
    }
    return Checkpoint(net, meta), log


def greedy_boundary_1d(net: MlpParams, half_width: float, n_points: int = 4001) -> float:
    """Mean of the smallest positive and negative ``|e|`` where the greedy action is 1.

    Returns ``inf`` on a side where the network never schedules inside the range.
    """
    grid = np.linspace(0.0, half_width, n_points)
    sides = []
    for sign in (1.0, -1.0):
        q = forward(net, (sign * grid)[:, None])
        hit = np.flatnonzero(q[:, 1] < q[:, 0])
        sides.append(grid[hit[0]] if hit.size else np.inf)
    return float(np.mean(sides))


# --- checkpoint persistence --------------------------------------------------


def dumps_checkpoint(c: Checkpoint) -> str:
    return json.dumps(c.to_dict(), separators=(",", ":")) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(c: Checkpoint, path) -> None:
    atomic_write_text(path, dumps_checkpoint(c))


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable checkpoint ({exc})") from None
    if not isinstance(d, dict):
        raise CorruptCheckpoint(f"{path}: checkpoint must be a JSON object")
    if d.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {d.get('version')!r}, expected {CHECKPOINT_VERSION}")
    try:
        if d["activation"] != "gelu":
            raise CorruptCheckpoint(f"{path}: unsupported activation {d['activation']!r}")
        if _param_digest(d["weights"], d["biases"]) != d["param_digest"]:
            raise CorruptCheckpoint(f"{path}: parameter digest mismatch")
        params = MlpParams(
            tuple(d["layer_dims"]),
            [np.array(W, dtype=np.float64) for W in d["weights"]],
            [np.array(b, dtype=np.float64) for b in d["biases"]],
        )
        meta = d["meta"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptCheckpoint):
            raise
        raise CorruptCheckpoint(f"{path}: malformed checkpoint ({exc})") from None
    if params.layer_dims[-1] != 2:
        raise CorruptCheckpoint(f"{path}: output width must be 2")
    return Checkpoint(params, meta, d["activation"], d["version"])


def check_compatibility(c: Checkpoint, m: SystemModel) -> List[str]:
    """Raise if the checkpoint was trained on a different plant; warn on a lambda mismatch."""
    if c.params.layer_dims[0] != m.n_x:
        raise IncompatibleCheckpoint(f"network input width {c.params.layer_dims[0]} != n_x={m.n_x}")
    digest = c.meta.get("system_digest")
    if digest is not None and digest != system_digest(m):
        raise IncompatibleCheckpoint("checkpoint was trained on a different system")
    notes = []
    lam = c.meta.get("lambda")
    if lam is not None and lam != m.lam:
        msg = f"checkpoint trained with lambda={lam}, evaluating with lambda={m.lam}"
        warnings.warn(msg, LambdaMismatchWarning, stacklevel=2)
        notes.append(msg)
    return notes


def write_log_csv(log: List[EpisodeLog], path) -> None:
    lines = [",".join(LOG_HEADER)]
    for r in log:
        lines.append(f"{r.episode},{r.steps},{r.epsilon!r},{r.mean_loss!r},{r.episode_cost!r},{r.transmissions}")
    atomic_write_text(path, "\n".join(lines) + "\n")
