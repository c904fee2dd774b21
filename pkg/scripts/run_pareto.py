"""Trade-off curves: periodic and event-triggered sweeps plus trained DQN points.

Example:
    python3 scripts/run_pareto.py --lambdas 50 60 --seeds 0 1 --out results/pareto
    python3 scripts/run_pareto.py --lambdas 60 --uniform 1.0 --out results/pareto_uniform
"""

import argparse
from pathlib import Path

from interq.dqn import TrainConfig, atomic_write_text, save_checkpoint, train_interq
from interq.eval import ParetoRow, dominates, estimate_costs, pareto_csv_lines, pareto_sweep
from interq.model import solve_riccati, validate_system
from interq.policies import DqnPolicy

A = [[1.5, 2.0], [0.0, 1.51]]
B = [[0.0], [1.0]]
PERIODIC = [1, 2, 3, 4, 5, 6, 8, 10]
EVENT = [0, 1, 2, 4, 6, 8, 10, 12, 15, 20, 30]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[50.0, 60.0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--uniform", type=float, help="uniform noise half-width instead of N(0, I)")
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--horizon", type=int, default=400)
    ap.add_argument("--rollouts", type=int, default=1000)
    ap.add_argument("--out", default="results/pareto")
    args = ap.parse_args()
    out = Path(args.out)
    noise = {"uniform": args.uniform} if args.uniform else None
    for lam in args.lambdas:
        m = validate_system(A, B, [[1, 0], [0, 1]], [[1]], [[1, 0], [0, 1]], 0.95, lam, noise=noise)
        sol = solve_riccati(m)
        rows = pareto_sweep(m, sol, "periodic", PERIODIC, args.horizon, args.rollouts, 1)
        rows += pareto_sweep(m, sol, "event", EVENT, args.horizon, args.rollouts, 1)
        baselines = list(rows)
        for seed in args.seeds:
            ckpt, _ = train_interq(m, sol, TrainConfig(seed=seed, episodes=args.episodes))
            save_checkpoint(ckpt, out / f"ckpt_lambda{lam:g}_seed{seed}.json")
            rep = estimate_costs(m, sol, DqnPolicy(ckpt.params), args.horizon, args.rollouts, 1)
            rows.append(ParetoRow("dqn", seed, rep))
            me = (rep.mean_comm_cost, rep.mean_control_cost)
            dom = [f"{r.family}:{r.tau:g}" for r in baselines if dominates((r.report.mean_comm_cost, r.report.mean_control_cost), me)]
            best = min(r.report.mean_total for r in baselines)
            print(f"lambda={lam:g} seed={seed}: comm={me[0]:.1f} control={me[1]:.1f} "
                  f"total/best={rep.mean_total / best:.3f} dominated_by={dom or 'none'}")
        atomic_write_text(out / f"pareto_lambda{lam:g}.csv", "\n".join(pareto_csv_lines(rows)) + "\n")


if __name__ == "__main__":
    main()
