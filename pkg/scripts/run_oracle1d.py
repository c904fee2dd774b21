"""Scalar plant: value-iteration threshold against trained DQN boundaries.

Example:
    python3 scripts/run_oracle1d.py --seeds 0 1 2 --lambdas 2 5 10
"""

import argparse

from interq.dqn import TrainConfig, greedy_boundary_1d, train_interq
from interq.eval import scalar_system, value_iteration_1d
from interq.model import solve_riccati

PLANT = dict(a=1.2, b=1.0, q=1.0, r=1.0, k_w=0.25, gamma=0.9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[5.0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()
    for lam in args.lambdas:
        table = value_iteration_1d(**PLANT, lam=lam)
        m = scalar_system(**PLANT, lam=lam)
        sol = solve_riccati(m)
        print(f"lambda={lam:g}: value-iteration threshold {table.threshold:.3f} (residual {table.bellman_residual:.1e})")
        for seed in args.seeds:
            ckpt, _ = train_interq(m, sol, TrainConfig(seed=seed))
            e_star = greedy_boundary_1d(ckpt.params, 20.0)
            print(f"  seed {seed}: learned boundary {e_star:.3f} ({(e_star - table.threshold) / table.threshold:+.1%})")


if __name__ == "__main__":
    main()
