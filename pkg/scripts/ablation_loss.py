"""Huber versus squared loss: training stability on the paper system.

Trains with each loss (same seeds) and reports the final mean loss, whether
training diverged, and the evaluated total cost.

Example:
    python3 scripts/ablation_loss.py --lam 60 --seeds 0 1 --guard 10
"""

import argparse

import numpy as np

from interq.dqn import TrainConfig, train_interq
from interq.errors import Divergence
from interq.eval import estimate_costs
from interq.model import solve_riccati, validate_system
from interq.nn import LossSpec
from interq.policies import DqnPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=60.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--guard", type=float, default=10.0, help="forced-schedule level; <= 0 disables it")
    args = ap.parse_args()
    m = validate_system([[1.5, 2.0], [0.0, 1.51]], [[0.0], [1.0]], [[1, 0], [0, 1]], [[1]], [[1, 0], [0, 1]], 0.95, args.lam)
    sol = solve_riccati(m)
    guard = args.guard if args.guard > 0 else None
    for kind in ("huber", "mse"):
        for seed in args.seeds:
            cfg = TrainConfig(seed=seed, episodes=args.episodes, loss=LossSpec(kind), guard=guard)
            try:
                ckpt, log = train_interq(m, sol, cfg)
            except Divergence as exc:
                print(f"{kind} seed={seed}: diverged ({exc})")
                continue
            tail = np.nanmean([e.mean_loss for e in log[-50:]])
            rep = estimate_costs(m, sol, DqnPolicy(ckpt.params), 400, 500, 1)
            print(f"{kind} seed={seed}: final mean loss {tail:.3g}, total cost {rep.mean_total:.1f} +- {rep.ci_halfwidth:.1f}")


if __name__ == "__main__":
    main()
