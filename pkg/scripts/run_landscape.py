"""Scheduling landscape of a trained network against the Lemma bounds, with an ellipse fit.

Example:
    python3 scripts/run_landscape.py --lam 2000 --seed 0 --out results/landscape
"""

import argparse
import json
from pathlib import Path

from interq.dqn import TrainConfig, atomic_write_text, load_checkpoint, train_interq
from interq.errors import DegenerateFit
from interq.eval import fit_boundary_ellipse, landscape_csv_lines, landscape_scan
from interq.model import lemma_bounds, solve_riccati, validate_system


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, default=60.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ckpt", help="reuse a checkpoint instead of training")
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--out", default="results/landscape")
    args = ap.parse_args()
    m = validate_system([[1.5, 2.0], [0.0, 1.51]], [[0.0], [1.0]], [[1, 0], [0, 1]], [[1]], [[1, 0], [0, 1]], 0.95, args.lam)
    sol = solve_riccati(m)
    if args.ckpt:
        ckpt = load_checkpoint(args.ckpt)
    else:
        ckpt, _ = train_interq(m, sol, TrainConfig(seed=args.seed))
    samples, summary = landscape_scan(ckpt, m, sol, n=args.n, master_seed=args.seed)
    out = Path(args.out)
    atomic_write_text(out / f"landscape_lambda{args.lam:g}.csv", "\n".join(landscape_csv_lines(samples)) + "\n")
    result = dict(lemma_bounds(m, sol).to_dict(), summary=summary.to_dict(), Z=None)
    try:
        fit = fit_boundary_ellipse(samples)
        result.update(Z=fit.Z.tolist(), fit_misclassification=fit.misclassification)
    except DegenerateFit as exc:
        result["fit_error"] = str(exc)
    atomic_write_text(out / f"bounds_lambda{args.lam:g}.json", json.dumps(result, indent=2) + "\n")
    print(json.dumps(result["summary"], indent=2))


if __name__ == "__main__":
    main()
