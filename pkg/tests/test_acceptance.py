"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Training-based criteria are slow (about a minute per training run on one
core); the whole module takes roughly 15-20 minutes.
"""

import json
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from interq.cli import main
from interq.dqn import TrainConfig, greedy_boundary_1d, train_interq
from interq.env import env_step, rollout_rng, sample_noise_sequence, simulate_batch
from interq.eval import dominates, estimate_costs, landscape_scan, pareto_sweep, value_iteration_1d
from interq.model import lemma_bounds, riccati_map, solve_riccati, validate_system
from interq.nn import LossSpec
from interq.policies import Always, DqnPolicy, EventTriggered, Periodic

from .conftest import paper_system, random_system
from .helpers import gradient_check, report

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
PRINTED_P = np.array([[5.70, 7.34], [7.34, 14.36]])
PRINTED_RHAT = 14.64

SCALAR = dict(a=1.2, b=1.0, q=1.0, r=1.0, k_w=0.25, gamma=0.9)
SCALAR_LAMBDA = 5.0

PERIODIC_TAUS = [1, 2, 3, 4, 5, 6, 8, 10]
EVENT_TAUS = [0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.0, 20.0, 30.0]
EVAL_HORIZON = 400
EVAL_ROLLOUTS = 1000
EVAL_SEED = 1
MAX_SEEDS = 3


@lru_cache(maxsize=None)
def trained(lam: float, uniform: bool, seed: int):
    """Default-config training run on the paper system, shared across criteria."""
    m = paper_system(lam, noise={"uniform": 1.0} if uniform else None)
    sol = solve_riccati(m)
    ckpt, _ = train_interq(m, sol, TrainConfig(seed=seed))
    return m, sol, ckpt


def test_c1_riccati_reproduction(tmp_path, capsys):
    t0 = time.perf_counter()
    code = main(["solve", "--config", str(CONFIGS / "paper_sys.json"), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    out = json.loads(capsys.readouterr().out)
    P = np.array(out["solution"]["P"])
    rhat = out["solution"]["Rhat"][0][0]
    p_err = float(np.abs(P - PRINTED_P).max())
    ok = code == 0 and p_err <= 0.01 and abs(rhat - PRINTED_RHAT) <= 0.01 and elapsed < 1.0
    report(1, "Riccati reproduction", ok, f"max|P-P_printed|={p_err:.4f}, Rhat={rhat:.4f}, {elapsed:.3f}s")
    assert ok


def test_c2_riccati_residual():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        m = random_system(rng)
        sol = solve_riccati(m)
        worst = max(worst, float(np.abs(riccati_map(sol.P, m) - sol.P).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    report(2, "Riccati residual", ok, f"worst defect {worst:.2e} over 50 systems, {elapsed:.2f}s")
    assert ok


def test_c3_gradient_fidelity():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        dims = (int(rng.integers(1, 5)), int(rng.integers(2, 17)), int(rng.integers(2, 17)), 2)
        for spec in (LossSpec("huber", 1.0), LossSpec("mse")):
            worst = max(worst, gradient_check(dims, seed, spec))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30.0
    report(3, "gradient fidelity", ok, f"max relative error {worst:.2e} over 20 seeds x 2 losses, {elapsed:.1f}s")
    assert ok


def test_c4_mdp_semantics():
    m = paper_system(50.0)
    sol = solve_riccati(m)
    rng = np.random.default_rng(4)
    E = rng.normal(scale=rng.uniform(0.01, 100.0, (100_000, 1)), size=(100_000, 2))
    W = rng.normal(size=(100_000, 2))
    A = rng.integers(0, 2, 100_000)
    quiet = rng.random(100_000) < 0.25
    W[quiet] = 0.0
    bad = 0
    for e, w, a, q in zip(E, W, A, quiet):
        nxt, c = env_step(e, int(a), w, sol, m)
        if c != float(e @ sol.Gamma @ e) + m.lam * a:
            bad += 1
        elif a == 1 and (nxt.any() or nxt.shape != e.shape):
            bad += 1
        elif a == 0 and q and not np.array_equal(nxt, m.A @ e):
            bad += 1
        elif a == 0 and not np.array_equal(nxt, m.A @ e + w):
            bad += 1
    report(4, "MDP semantics", bad == 0, f"{bad} violations in 100000 env_step calls")
    assert bad == 0


def test_c5_cost_identity():
    m = paper_system(50.0)
    sol = solve_riccati(m)
    H, n = 400, 5000
    # the truncated horizon keeps the first H noise terms of the offset
    offset = m.gamma / (1 - m.gamma) * float(np.trace(sol.P @ m.K_W)) * (1 - m.gamma**H)
    noise = np.stack([sample_noise_sequence(m.noise, rollout_rng(5, i), H) for i in range(n)])
    parts = []
    ok = True
    for name, policy in (("always", Always()), ("periodic5", Periodic(5)), ("event10", EventTriggered(10.0))):
        control, comm, err, _ = simulate_batch(m, sol, policy, H, noise)
        gap = control + comm - err
        se = gap.std(ddof=1) / np.sqrt(n)
        z = (gap.mean() - offset) / se
        ok &= abs(z) <= 3.0
        parts.append(f"{name} z={z:+.2f}")
    report(5, "cost identity", ok, f"offset {offset:.2f}; " + ", ".join(parts))
    assert ok


def test_c6_scalar_oracle():
    table = value_iteration_1d(**SCALAR, lam=SCALAR_LAMBDA)
    v0 = float(table.V[len(table.grid) // 2])
    table_ok = table.bellman_residual < 1e-8 and v0 <= SCALAR_LAMBDA / (1 - SCALAR["gamma"]) + 1e-9
    m = validate_system([[1.2]], [[1.0]], [[1.0]], [[1.0]], [[0.25]], 0.9, SCALAR_LAMBDA)
    sol = solve_riccati(m)
    tries = []
    ok = False
    for seed in range(MAX_SEEDS):
        ckpt, _ = train_interq(m, sol, TrainConfig(seed=seed))
        boundary = greedy_boundary_1d(ckpt.params, 20.0)
        rel = abs(boundary - table.threshold) / table.threshold
        tries.append(f"seed {seed}: {boundary:.3f} ({rel:+.1%})")
        if rel <= 0.25:
            ok = True
            break
    ok = ok and table_ok
    report(
        6,
        "1-D oracle agreement",
        ok,
        f"VI threshold {table.threshold:.3f}, residual {table.bellman_residual:.1e}, V(0)={v0:.3f}; " + "; ".join(tries),
    )
    assert ok


def test_c7_lemma_consistency():
    m60, sol60, ck60 = trained(60.0, False, 0)
    _, s60 = landscape_scan(ck60, m60, sol60, master_seed=0, n=10_000)
    m2k, sol2k, ck2k = trained(2000.0, False, 0)
    _, s2k = landscape_scan(ck2k, m2k, sol2k, master_seed=0, n=10_000)
    b2k = lemma_bounds(m2k, sol2k)
    ok60 = s60.n_schedule_sufficient > 0 and s60.agree_schedule >= 0.95
    ok2k = (
        b2k.c_inner > 0
        and s2k.n_schedule_sufficient > 0
        and s2k.n_no_schedule_sufficient > 0
        and s2k.agree_schedule >= 0.95
        and s2k.agree_no_schedule >= 0.95
    )
    detail = (
        f"lambda=60: schedule-sufficient {s60.agree_schedule:.3f} (n={s60.n_schedule_sufficient}); "
        f"lambda=2000: schedule-sufficient {s2k.agree_schedule:.3f} (n={s2k.n_schedule_sufficient}), "
        f"no-schedule-sufficient {s2k.agree_no_schedule:.3f} (n={s2k.n_no_schedule_sufficient})"
    )
    report(7, "Lemma consistency", ok60 and ok2k, detail)
    assert ok60 and ok2k


def _pareto_check(lam: float, uniform: bool, need_total: bool):
    m = paper_system(lam, noise={"uniform": 1.0} if uniform else None)
    sol = solve_riccati(m)
    kw = dict(horizon=EVAL_HORIZON, n_rollouts=EVAL_ROLLOUTS, master_seed=EVAL_SEED)
    rows = pareto_sweep(m, sol, "periodic", PERIODIC_TAUS, **kw) + pareto_sweep(m, sol, "event", EVENT_TAUS, **kw)
    points = [(r.report.mean_comm_cost, r.report.mean_control_cost) for r in rows]
    best_total = min(r.report.mean_total for r in rows)
    tries = []
    for seed in range(MAX_SEEDS):
        _, _, ckpt = trained(lam, uniform, seed)
        rep = estimate_costs(m, sol, DqnPolicy(ckpt.params), EVAL_HORIZON, EVAL_ROLLOUTS, EVAL_SEED)
        me = (rep.mean_comm_cost, rep.mean_control_cost)
        dominated = any(dominates(p, me) for p in points)
        ratio = rep.mean_total / best_total
        ok = not dominated and (ratio <= 1.05 or not need_total)
        tries.append(f"seed {seed}: comm {me[0]:.1f}, control {me[1]:.1f}, total/best {ratio:.3f}, dominated={dominated}")
        if ok:
            return True, tries
    return False, tries


def test_c8_pareto_trend():
    results = []
    ok = True
    for lam, uniform, need_total in ((50.0, False, True), (60.0, False, True), (60.0, True, False)):
        passed, tries = _pareto_check(lam, uniform, need_total)
        ok &= passed
        label = f"{'uniform' if uniform else 'gaussian'} lambda={lam:g}"
        shown = tries[-1] if passed else "; ".join(tries)
        results.append(f"{label}: {'ok' if passed else 'fail'} [{shown}]")
    report(8, "Pareto trend", ok, "; ".join(results))
    assert ok


def test_c9_determinism(tmp_path):
    cfg = {
        "system": str(CONFIGS / "paper_sys.json"),
        "train": {"episodes": 40, "seed": 0},
        "pareto": {"horizon": 100, "rollouts": 200, "seed": 3, "periodic_taus": [1, 2, 4], "event_taus": [0, 5, 10]},
        "landscape": {"n": 2000, "seed": 2},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--config", str(path), "--seed", "11", "--out", str(out)]) == 0
        ckpt = str(out / "checkpoint.json")
        assert main(["pareto", "--config", str(path), "--ckpt", ckpt, "--out", str(out)]) == 0
        assert main(["landscape", "--config", str(path), "--ckpt", ckpt, "--out", str(out)]) == 0
        names = ("checkpoint.json", "train_log.csv", "pareto.csv", "landscape.csv")
        blobs.append([(out / f).read_bytes() for f in names])
    same = [a == b for a, b in zip(*blobs)]
    ok = all(same)
    report(9, "determinism", ok, "byte-identical: " + ", ".join(f"{n}={s}" for n, s in zip(names, same)))
    assert ok
