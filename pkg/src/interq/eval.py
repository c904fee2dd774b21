"""Monte Carlo evaluation, trade-off sweeps, landscape analysis and a 1-D oracle."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.spatial import cKDTree
from scipy.special import ndtr

from .dqn import Checkpoint, check_compatibility, default_e0_init
from .env import rollout_rng, sample_noise_sequence, simulate_batch
from .errors import DegenerateFit, GridTooSmall, NoConvergence, NumericalOverflow
from .model import (
    LemmaBounds,
    LemmaClass,
    RiccatiSolution,
    SystemModel,
    classify_errors,
    lemma_bounds,
    solve_riccati,
    validate_system,
)
from .nn import MlpParams
from .policies import DqnPolicy, EventTriggered, Periodic

Z95 = 1.959963984540054
CHUNK = 500


@dataclass
class RolloutReport:
    mean_control_cost: float
    mean_comm_cost: float
    mean_total: float
    ci_halfwidth: float
    n_rollouts: int
    horizon: int
    comm_rate: float
    mean_error_cost: float = float("nan")
    samples: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "mean_control_cost": self.mean_control_cost,
            "mean_comm_cost": self.mean_comm_cost,
            "mean_total": self.mean_total,
            "ci_halfwidth": self.ci_halfwidth,
            "n_rollouts": self.n_rollouts,
            "horizon": self.horizon,
            "comm_rate": self.comm_rate,
            "mean_error_cost": self.mean_error_cost,
        }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("INTERQ_THREADS", "1")))
    except ValueError:
        return 1


def estimate_costs(
    m: SystemModel,
    sol: RiccatiSolution,
    policy,
    horizon: int,
    n_rollouts: int,
    master_seed: int,
    x0=None,
) -> RolloutReport:
    """Discounted costs averaged over independent seeded rollouts.

    Rollout ``i`` draws its noise from ``rollout_rng(master_seed, i)`` so
    different policies evaluated with the same seed see the same noise paths.
    Per-rollout results are reduced in index order, so the report does not
    depend on ``INTERQ_THREADS``.
    """
    if n_rollouts < 2:
        raise ValueError("need at least two rollouts for a confidence interval")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")

    def run(start):
        stop = min(start + CHUNK, n_rollouts)
        noise = np.stack([sample_noise_sequence(m.noise, rollout_rng(master_seed, i), horizon) for i in range(start, stop)])
        try:
            return simulate_batch(m, sol, policy, horizon, noise, x0=x0)
        except NumericalOverflow as exc:
            raise NumericalOverflow(
                f"rollout {start + exc.rollout_index}: {exc}", rollout_index=start + exc.rollout_index
            ) from None

    starts = range(0, n_rollouts, CHUNK)
    n_threads = _threads()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    control, comm, err, count = (np.concatenate(p) for p in zip(*parts))
    total = control + comm
    mean_control = float(control.mean())
    mean_comm = float(comm.mean())
    return RolloutReport(
        mean_control_cost=mean_control,
        mean_comm_cost=mean_comm,
        mean_total=mean_control + mean_comm,
        ci_halfwidth=float(Z95 * total.std(ddof=1) / math.sqrt(n_rollouts)),
        n_rollouts=n_rollouts,
        horizon=horizon,
        comm_rate=float(count.sum() / (n_rollouts * horizon)),
        mean_error_cost=float(err.mean()),
        samples={"control": control, "comm": comm, "error": err, "transmissions": count},
    )


@dataclass
class ParetoRow:
    family: str
    tau: float
    report: RolloutReport


PARETO_HEADER = "family,tau,comm_cost,control_cost,total,ci,comm_rate"


def make_policy(family: str, tau):
    if family == "periodic":
        return Periodic(int(tau))
    if family == "event":
        return EventTriggered(float(tau))
    raise ValueError(f"unknown baseline family {family!r}")


def pareto_sweep(
    m: SystemModel,
    sol: RiccatiSolution,
    family: str,
    taus: Sequence[float],
    horizon: int = 400,
    n_rollouts: int = 1000,
    master_seed: int = 0,
) -> List[ParetoRow]:
    """One report per threshold, all under common random numbers, sorted by comm cost."""
    if not len(taus):
        raise ValueError("empty tau list")
    rows = [
        ParetoRow(family, tau, estimate_costs(m, sol, make_policy(family, tau), horizon, n_rollouts, master_seed))
        for tau in taus
    ]
    return sorted(rows, key=lambda r: (r.report.mean_comm_cost, r.tau))


def pareto_csv_lines(rows: Sequence[ParetoRow]) -> List[str]:
    out = [PARETO_HEADER]
    for r in rows:
        rep = r.report
        out.append(
            f"{r.family},{r.tau!r},{rep.mean_comm_cost!r},{rep.mean_control_cost!r},"
            f"{rep.mean_total!r},{rep.ci_halfwidth!r},{rep.comm_rate!r}"
        )
    return out


def dominates(p, q) -> bool:
    """``p`` Pareto-dominates ``q``; points are ``(comm_cost, control_cost)``."""
    return p[0] <= q[0] and p[1] <= q[1] and (p[0] < q[0] or p[1] < q[1])


# --- scheduling landscape ---------------------------------------------------


@dataclass
class LandscapeSample:
    e: np.ndarray
    action: int
    lemma_class: LemmaClass


@dataclass
class LandscapeSummary:
    n: int
    n_schedule_sufficient: int
    n_no_schedule_sufficient: int
    agree_schedule: float
    agree_no_schedule: float
    action_rate: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def default_landscape_box(b: LemmaBounds) -> np.ndarray:
    """Per-coordinate half-widths: the outer ellipse's bounding box scaled by 1.25.

    When ``A' Γ A`` is singular the ellipse is an unbounded strip. The box
    then uses the semi-axis along the most sensitive direction, which keeps
    it at 1.25/1.5 of the training start box, the same nesting as in the
    regular case, so the scan stays inside the region training starts from.
    """
    n = b.shape.shape[0]
    w = np.linalg.eigvalsh(b.shape)
    if b.c_outer > 0 and w[0] > 1e-9 * max(w[-1], 1e-300):
        return 1.25 * np.sqrt(b.c_outer * np.diag(np.linalg.inv(b.shape)))
    return np.full(n, (1.25 / 1.5) * default_e0_init(b).r)


def landscape_points(region: dict, n_x: int, master_seed: int) -> np.ndarray:
    """``{"box": h, "n": count}`` for uniform samples or ``{"grid": h, "points": k}``."""
    if "box" in region:
        h = np.broadcast_to(np.asarray(region["box"], dtype=np.float64), (n_x,))
        rng = rollout_rng(master_seed, 0)
        return rng.uniform(-1.0, 1.0, (int(region["n"]), n_x)) * h
    if "grid" in region:
        h = np.broadcast_to(np.asarray(region["grid"], dtype=np.float64), (n_x,))
        axes = [np.linspace(-hi, hi, int(region["points"])) for hi in h]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)
    raise ValueError("region must specify 'box' or 'grid'")


def landscape_scan(
    net: Union[MlpParams, Checkpoint],
    m: SystemModel,
    sol: RiccatiSolution,
    region: Optional[dict] = None,
    master_seed: int = 0,
    n: int = 10_000,
):
    """Greedy actions of the network next to the Lemma classification.

    Returns ``(samples, summary)``. ``region`` defaults to ``n`` uniform
    points in :func:`default_landscape_box`.

    Raises:
        IncompatibleCheckpoint: when a checkpoint was trained on another plant.
    """
    if isinstance(net, Checkpoint):
        check_compatibility(net, m)
        net = net.params
    b = lemma_bounds(m, sol)
    if region is None:
        region = {"box": default_landscape_box(b), "n": n}
    E = landscape_points(region, m.n_x, master_seed)
    actions = DqnPolicy(net).decide_batch(E)
    classes = classify_errors(E, b)
    samples = [LandscapeSample(e, int(a), c) for e, a, c in zip(E, actions, classes)]
    # identity tests: numpy turns a bare str-enum operand into a plain string
    sched = np.array([c is LemmaClass.SCHEDULE for c in classes], dtype=bool)
    nosched = np.array([c is LemmaClass.NO_SCHEDULE for c in classes], dtype=bool)
    summary = LandscapeSummary(
        n=len(E),
        n_schedule_sufficient=int(sched.sum()),
        n_no_schedule_sufficient=int(nosched.sum()),
        agree_schedule=float(actions[sched].mean()) if sched.any() else float("nan"),
        agree_no_schedule=float(1.0 - actions[nosched].mean()) if nosched.any() else float("nan"),
        action_rate=float(actions.mean()) if len(E) else float("nan"),
    )
    return samples, summary


def landscape_csv_lines(samples: Sequence[LandscapeSample]) -> List[str]:
    n = len(samples[0].e) if samples else 0
    out = [",".join([f"e{i + 1}" for i in range(n)] + ["action", "lemma_class"])]
    for s in samples:
        out.append(",".join([repr(float(x)) for x in s.e] + [str(s.action), s.lemma_class.value]))
    return out


@dataclass
class EllipseFit:
    Z: np.ndarray
    misclassification: float
    n_boundary_points: int


def _quadric_features(E: np.ndarray) -> np.ndarray:
    n = E.shape[1]
    cols = []
    for i in range(n):
        for j in range(i, n):
            cols.append(E[:, i] * E[:, j] * (1.0 if i == j else 2.0))
    return np.stack(cols, axis=1)


def fit_boundary_ellipse(samples: Sequence[LandscapeSample]) -> EllipseFit:
    """Centered quadric ``e' Z e = 1`` through midpoints of opposite-action neighbours.

    Only pairs closer than twice the median nearest-neighbour spacing are
    used, so the midpoints hug the decision boundary.

    Raises:
        DegenerateFit: if either action class is empty.
    """
    E = np.array([s.e for s in samples], dtype=np.float64)
    a = np.array([s.action for s in samples])
    if not len(E) or a.min() == a.max():
        raise DegenerateFit("need samples of both actions to fit a boundary")
    n = E.shape[1]
    # typical sample spacing; pairs further apart than twice this do not
    # straddle the boundary closely and would bias the fit
    spacing = float(np.median(cKDTree(E).query(E, k=2)[0][:, 1]))
    mids = []
    for label in (0, 1):
        mine, other = E[a == label], E[a != label]
        dist, idx = cKDTree(other).query(mine)
        close = dist <= 2.0 * spacing
        mids.append(0.5 * (mine[close] + other[idx[close]]))
    M = np.unique(np.concatenate(mids), axis=0)
    if len(M) < n * (n + 1) // 2:
        raise DegenerateFit(f"only {len(M)} boundary points for {n * (n + 1) // 2} unknowns")
    coef, *_ = np.linalg.lstsq(_quadric_features(M), np.ones(len(M)), rcond=None)
    Z = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i, n):
            Z[i, j] = Z[j, i] = coef[k]
            k += 1
    pred = np.einsum("ij,jk,ik->i", E, Z, E) >= 1.0
    return EllipseFit(Z, float(np.mean(pred != (a == 1))), len(M))


# --- 1-D value iteration oracle ---------------------------------------------


@dataclass
class ValueTable1D:
    grid: np.ndarray
    V: np.ndarray
    action: np.ndarray
    threshold: float
    bellman_residual: float
    iterations: int
    gamma_cost: float

    def csv_lines(self) -> List[str]:
        out = ["e,V,action"]
        for e, v, a in zip(self.grid, self.V, self.action):
            out.append(f"{e!r},{v!r},{int(a)}")
        return out


def scalar_system(a, b, q, r, k_w, gamma, lam, noise_half_width=None) -> SystemModel:
    noise = None if noise_half_width is None else {"uniform": noise_half_width}
    return validate_system([[a]], [[b]], [[q]], [[r]], [[k_w]], gamma, lam, noise=noise)


def value_iteration_1d(
    a: float,
    b: float,
    q: float,
    r: float,
    k_w: float,
    gamma: float,
    lam: float,
    half_width: float = 20.0,
    n_points: int = 2001,
    n_quad: int = 33,
    noise_half_width: Optional[float] = None,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> ValueTable1D:
    """Solve ``V(e) = Γe² + min(γ E V(ae + w), λ + γ V(0))`` on a grid.

    Gaussian noise uses ``n_quad``-point Gauss-Hermite quadrature; uniform
    noise on ``[-h, h]`` (``noise_half_width=h``, ``k_w`` ignored) uses the
    midpoint rule. Values between grid points are linearly interpolated and
    clamped at the edges.

    Raises:
        NoConvergence: if the sup-norm update stays above ``tol``.
        GridTooSmall: if the continuation region leaks more than 1e-3
            probability mass past the grid edge.
    """
    if n_points < 101 or n_points % 2 == 0:
        raise ValueError("n_points must be odd and >= 101")
    m = scalar_system(a, b, q, r, k_w, gamma, lam, noise_half_width)
    G = float(solve_riccati(m).Gamma[0, 0])
    mid = n_points // 2
    pos = np.linspace(0.0, half_width, mid + 1)
    grid = np.concatenate([-pos[:0:-1], pos])  # exactly symmetric, exact zero
    if noise_half_width is None:
        x, w = hermegauss(n_quad)
        nodes, weights = math.sqrt(k_w) * x, w / math.sqrt(2.0 * math.pi)
    else:
        h = float(noise_half_width)
        nodes = h * (-1.0 + (2.0 * np.arange(n_quad) + 1.0) / n_quad)
        weights = np.full(n_quad, 1.0 / n_quad)
    succ = (a * grid)[:, None] + nodes[None, :]
    stage = G * grid * grid

    def continuation(V):
        return np.interp(succ, grid, V) @ weights

    V = stage.copy()
    for it in range(1, max_iter + 1):
        V_new = stage + np.minimum(gamma * continuation(V), lam + gamma * V[mid])
        change = float(np.abs(V_new - V).max())
        V = V_new
        if change < tol:
            break
    else:
        raise NoConvergence(f"value iteration did not converge in {max_iter} sweeps")

    cont = gamma * continuation(V)
    reset = lam + gamma * V[mid]
    action = (reset < cont).astype(np.int8)
    residual = float(np.abs(stage + np.minimum(cont, reset) - V).max())
    hits = np.abs(grid[action == 1])
    threshold = float(hits.min()) if hits.size else float("inf")

    waiting = np.abs(grid[action == 0])
    e_c = float(waiting.max()) if waiting.size else 0.0
    mean = abs(a) * e_c
    if noise_half_width is None:
        sd = math.sqrt(k_w)
        leak = float(ndtr((mean - half_width) / sd) + ndtr((-half_width - mean) / sd)) if sd > 0 else float(mean > half_width)
    else:
        h = float(noise_half_width)
        leak = max(0.0, mean + h - half_width) / (2 * h) if h > 0 else float(mean > half_width)
    if leak > 1e-3:
        raise GridTooSmall(f"{leak:.2g} of the successor mass leaves [-{half_width}, {half_width}]")
    return ValueTable1D(grid, V, action, threshold, residual, it, G)
