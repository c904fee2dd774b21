"""Stochastic environments: the error-state MDP and the full closed loop.

The scheduling decision taken at error ``e_k`` decides whether the *next*
error is reset: ``e_{k+1} = (1 - a_k) (A e_k + w_k)``, and ``lambda * a_k`` is
charged at stage ``k``. The closed-loop simulator follows the same convention,
so both environments produce identical error sequences from identical noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import NumericalOverflow
from .model import NoiseModel, RiccatiSolution, SystemModel

__all__ = [
    "NoiseModel",
    "ErrorInit",
    "ClosedLoopState",
    "Transition",
    "RolloutResult",
    "rollout_rng",
    "sample_noise",
    "sample_noise_sequence",
    "env_step",
    "reset_error",
    "closed_loop_rollout",
    "simulate_batch",
]

OVERFLOW_NORM = 1e12


def rollout_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for rollout ``index`` derived from ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def sample_noise(nm: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    return sample_noise_sequence(nm, rng, 1)[0]


def sample_noise_sequence(nm: NoiseModel, rng: np.random.Generator, length: int) -> np.ndarray:
    """``length`` consecutive draws; identical to ``length`` calls of :func:`sample_noise`."""
    n = nm.dim
    if nm.kind == "gaussian":
        z = rng.standard_normal((length, n))
        return z @ nm.factor.T
    u = rng.uniform(-1.0, 1.0, (length, n))
    return u * nm.half_width


@dataclass(frozen=True)
class ErrorInit:
    """Distribution of the initial error at the start of a training episode.

    ``kind="box"`` draws each coordinate uniformly on ``[-r, r]``;
    ``kind="gaussian"`` draws from ``N(0, cov)``.
    """

    kind: str = "box"
    r: float = 10.0
    cov: Optional[Tuple[Tuple[float, ...], ...]] = None

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "r": self.r}
        return {"kind": "gaussian", "cov": [list(row) for row in self.cov]}

    @classmethod
    def from_dict(cls, d) -> "ErrorInit":
        if d["kind"] == "box":
            return cls("box", float(d["r"]))
        return cls("gaussian", cov=tuple(tuple(float(x) for x in row) for row in d["cov"]))


def reset_error(init: ErrorInit, n_x: int, rng: np.random.Generator) -> np.ndarray:
    if init.kind == "box":
        if init.r < 0:
            raise ValueError("box half-width must be non-negative")
        return rng.uniform(-1.0, 1.0, n_x) * init.r
    if init.kind == "gaussian":
        return sample_noise(NoiseModel.gaussian(init.cov), rng)
    raise ValueError(f"unknown init kind {init.kind!r}")


@dataclass(frozen=True)
class Transition:
    e: np.ndarray
    a: int
    c: float
    e_next: np.ndarray
    terminal: bool


def env_step(e: np.ndarray, a: int, w: np.ndarray, sol: RiccatiSolution, m: SystemModel):
    """One MDP step. Returns ``(e_next, cost)`` with cost ``e'Γe + λa``."""
    e = np.asarray(e, dtype=np.float64)
    cost = float(e @ sol.Gamma @ e) + m.lam * a
    if a:
        return np.zeros_like(e), cost
    return m.A @ e + w, cost


@dataclass
class ClosedLoopState:
    x: np.ndarray
    xhat: np.ndarray
    k: int
    sched_instants: List[int] = field(default_factory=list)

    @property
    def e(self) -> np.ndarray:
        return self.x - self.xhat


@dataclass
class RolloutResult:
    trajectory: List[ClosedLoopState]
    actions: np.ndarray
    control_cost: float
    comm_cost: float
    error_cost: float

    @property
    def total(self) -> float:
        return self.control_cost + self.comm_cost


def closed_loop_rollout(
    m: SystemModel,
    sol: RiccatiSolution,
    policy,
    horizon: int,
    rng: np.random.Generator,
    x0: Optional[np.ndarray] = None,
    noise: Optional[np.ndarray] = None,
    xhat0: Optional[np.ndarray] = None,
) -> RolloutResult:
    """Simulate plant, certainty-equivalent controller and estimator.

    At step ``k`` the controller holds ``xhat_k`` and applies ``u_k = -L xhat_k``;
    the scheduler sees ``e_k = x_k - xhat_k`` and picks ``a_k``. On ``a_k = 1``
    the estimate is overwritten with ``x_{k+1}``, otherwise it is propagated
    open loop. ``noise`` overrides the draws from ``rng`` (shape
    ``(horizon, n_x)``). ``x0`` and ``xhat0`` default to zero; pass
    ``xhat0=x0`` for a controller that knows the initial state.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = m.n_x
    if noise is None:
        noise = sample_noise_sequence(m.noise, rng, horizon)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    xhat = np.zeros(n) if xhat0 is None else np.asarray(xhat0, dtype=np.float64).copy()
    g = m.gamma
    disc = 1.0
    control = comm = err = 0.0
    sched: List[int] = []
    traj = [ClosedLoopState(x.copy(), xhat.copy(), 0, [])]
    actions = np.zeros(horizon, dtype=np.int8)
    for k in range(horizon):
        e = x - xhat
        a = int(policy.decide(e, k))
        actions[k] = a
        u = -sol.L @ xhat
        control += disc * (float(x @ m.Q @ x) + float(u @ m.R @ u))
        comm += disc * m.lam * a
        err += disc * (float(e @ sol.Gamma @ e) + m.lam * a)
        x = m.A @ x + m.B @ u + noise[k]
        if a:
            sched.append(k)
            xhat = x.copy()
        else:
            xhat = m.A @ xhat + m.B @ u
        if not np.all(np.abs(x) < OVERFLOW_NORM):
            raise NumericalOverflow(f"state norm exceeded {OVERFLOW_NORM:g} at step {k + 1}")
        traj.append(ClosedLoopState(x.copy(), xhat.copy(), k + 1, list(sched)))
        disc *= g
    return RolloutResult(traj, actions, control, comm, err)


def simulate_batch(
    m: SystemModel,
    sol: RiccatiSolution,
    policy,
    horizon: int,
    noise: np.ndarray,
    x0: Optional[np.ndarray] = None,
):
    """Vectorized closed loop over a batch of rollouts sharing one policy.

    ``noise`` has shape ``(n_rollouts, horizon, n_x)``. Returns per-rollout
    arrays ``(control_cost, comm_cost, error_cost, n_transmissions)``.
    Follows exactly the recursion of :func:`closed_loop_rollout`.
    """
    n_roll = noise.shape[0]
    n = m.n_x
    x = np.zeros((n_roll, n)) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_roll, n)).copy()
    xhat = np.zeros((n_roll, n))
    control = np.zeros(n_roll)
    comm = np.zeros(n_roll)
    err = np.zeros(n_roll)
    count = np.zeros(n_roll, dtype=np.int64)
    AT, BT, LT = m.A.T, m.B.T, sol.L.T
    disc = 1.0
    for k in range(horizon):
        e = x - xhat
        a = np.asarray(policy.decide_batch(e, k), dtype=bool)
        u = -xhat @ LT
        control += disc * (np.einsum("ij,jk,ik->i", x, m.Q, x) + np.einsum("ij,jk,ik->i", u, m.R, u))
        comm += disc * m.lam * a
        err += disc * (np.einsum("ij,jk,ik->i", e, sol.Gamma, e) + m.lam * a)
        count += a
        Bu = u @ BT
        x = x @ AT + Bu + noise[:, k]
        xhat = np.where(a[:, None], x, xhat @ AT + Bu)
        bad = ~np.all(np.abs(x) < OVERFLOW_NORM, axis=1)
        if bad.any():
            raise NumericalOverflow(
                f"state norm exceeded {OVERFLOW_NORM:g} at step {k + 1}",
                rollout_index=int(np.flatnonzero(bad)[0]),
            )
        disc *= m.gamma
    return control, comm, err, count
