"""Scheduling policies.

Every policy exposes ``decide(e, k)`` for a single error vector and
``decide_batch(E, k)`` for a ``(b, n_x)`` stack; both return 0/1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .nn import MlpParams, forward


def dqn_decide(net: MlpParams, e) -> int:
    """Greedy action ``argmin_a Q(e, a)``; ties go to 0."""
    q = forward(net, e)
    return int(q[1] < q[0])


def periodic_decide(tau: int, k: int) -> int:
    return int(k % tau == 0)


def event_decide(tau: float, e) -> int:
    e = np.asarray(e, dtype=np.float64)
    return int(float(e @ e) >= tau)


@dataclass(frozen=True, eq=False)
class DqnPolicy:
    net: MlpParams
    name: str = "dqn"

    def decide(self, e, k=0) -> int:
        return dqn_decide(self.net, e)

    def decide_batch(self, E, k=0) -> np.ndarray:
        q = forward(self.net, np.atleast_2d(E))
        return (q[:, 1] < q[:, 0]).astype(np.int8)


@dataclass(frozen=True)
class Periodic:
    tau: int
    name: str = "periodic"

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValidationError(f"periodic tau must be an integer >= 1, got {self.tau}")

    def decide(self, e, k) -> int:
        return periodic_decide(self.tau, k)

    def decide_batch(self, E, k) -> np.ndarray:
        return np.full(len(E), periodic_decide(self.tau, k), dtype=np.int8)


@dataclass(frozen=True)
class EventTriggered:
    tau: float
    name: str = "event"

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValidationError(f"event threshold must be >= 0, got {self.tau}")

    def decide(self, e, k=0) -> int:
        return event_decide(self.tau, e)

    def decide_batch(self, E, k=0) -> np.ndarray:
        E = np.atleast_2d(E)
        return (np.einsum("ij,ij->i", E, E) >= self.tau).astype(np.int8)


@dataclass(frozen=True)
class Always:
    name: str = "always"

    def decide(self, e, k=0) -> int:
        return 1

    def decide_batch(self, E, k=0) -> np.ndarray:
        return np.ones(len(E), dtype=np.int8)


@dataclass(frozen=True)
class Never:
    name: str = "never"

    def decide(self, e, k=0) -> int:
        return 0

    def decide_batch(self, E, k=0) -> np.ndarray:
        return np.zeros(len(E), dtype=np.int8)


def policy_from_config(cfg: Mapping[str, Any]):
    """Build a policy from ``{"policy": ..., ...}``; DQN configs load their checkpoint."""
    kind = cfg.get("policy")
    if kind == "periodic":
        return Periodic(int(cfg["tau"]))
    if kind == "event":
        return EventTriggered(float(cfg["tau"]))
    if kind == "always":
        return Always()
    if kind == "never":
        return Never()
    if kind == "dqn":
        from .dqn import load_checkpoint

        return DqnPolicy(load_checkpoint(cfg["ckpt"]).params)
    raise ValidationError(f"unknown policy {kind!r}")
