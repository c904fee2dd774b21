"""Command-line entry point: ``interq <command> --config FILE [options]``.

A config is a JSON document. It is either a bare system description or an
object with a ``system`` entry (inline object or a path relative to the
config file) plus optional per-command sections ``train``, ``eval``,
``pareto``, ``landscape`` and ``oracle1d`` whose keys supply defaults for
the matching command-line flags. Every command writes its outputs and a
``manifest_<command>.json`` into ``--out`` (default: current directory).

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .dqn import (
    TrainConfig,
    atomic_write_text,
    check_compatibility,
    load_checkpoint,
    save_checkpoint,
    train_interq,
    write_log_csv,
)
from .errors import InterqRuntimeError, ValidationError
from .eval import (
    default_landscape_box,
    estimate_costs,
    fit_boundary_ellipse,
    landscape_csv_lines,
    landscape_scan,
    ParetoRow,
    pareto_csv_lines,
    pareto_sweep,
    value_iteration_1d,
)
from .model import lemma_bounds, solve_riccati, system_from_dict, validate_system
from .policies import DqnPolicy, policy_from_config

DEFAULT_PERIODIC_TAUS = [1, 2, 3, 4, 5, 6, 8, 10]
DEFAULT_EVENT_TAUS = [0, 1, 2, 4, 6, 8, 10, 12, 15, 20, 30]


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage problems as :class:`UsageError` (exit code 1)."""

    def error(self, message):
        raise UsageError(message)


# --- config handling ---------------------------------------------------------


def read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def load_config(path) -> Dict[str, Any]:
    """Config as a dict with the system section resolved to an inline object."""
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    if "system" not in cfg:
        return {"system": cfg}
    if isinstance(cfg["system"], str):
        sub = read_json(Path(path).parent / cfg["system"])
        cfg = dict(cfg, system=sub.get("system", sub) if isinstance(sub, dict) else sub)
    return cfg


def build_system(cfg: Dict[str, Any], lam: Optional[float] = None):
    sysd = dict(cfg["system"])
    if lam is not None:
        sysd["lambda"] = lam
    m = system_from_dict(sysd)
    return m, solve_riccati(m)


def without_noise(m):
    """Same plant with W = 0; the Riccati solution does not depend on K_W."""
    return validate_system(m.A, m.B, m.Q, m.R, np.zeros_like(m.K_W), m.gamma, m.lam)


def pick(args, cfg_section: Dict[str, Any], name: str, default=None):
    """Command-line value if given, else the config value, else ``default``."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg_section.get(name, default)


def _floats(text):
    if text is None or isinstance(text, list):
        return text
    return [float(x) for x in text.split(",") if x.strip()]


# --- outputs -----------------------------------------------------------------


class Run:
    """Collects output paths and writes the manifest when the command ends."""

    def __init__(self, command: str, args, config: Dict[str, Any]):
        self.command = command
        self.out = Path(args.out)
        self.config = config
        self.seed = getattr(args, "seed", None)
        self.outputs: List[str] = []
        self.started = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        atomic_write_text(path, text)
        self.outputs.append(str(path))
        return path

    def track(self, path: Path) -> None:
        self.outputs.append(str(path))

    def finish(self, extra: Optional[dict] = None) -> None:
        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "outputs": self.outputs,
            "duration_s": round(time.perf_counter() - self.started, 3),
            "code_version": __version__,
        }
        if extra:
            manifest.update(extra)
        atomic_write_text(self.out / f"manifest_{self.command}.json", json.dumps(manifest, indent=2) + "\n")


def dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# --- commands ----------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    m, sol = build_system(cfg, args.lam)
    result = {"solution": sol.to_dict(), "bounds": lemma_bounds(m, sol).to_dict()}
    run = Run("solve", args, cfg)
    run.write("solve.json", dump(result))
    sys.stdout.write(dump(result))
    run.finish()
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    section = dict(cfg.get("train", {}))
    if args.seed is not None:
        section["seed"] = args.seed
    if args.episodes is not None:
        section["episodes"] = args.episodes
    tc = TrainConfig.from_dict(section)
    m, sol = build_system(cfg, args.lam)
    resolved = dict(cfg, train=tc.to_dict())
    args.seed = tc.seed
    run = Run("train", args, resolved)

    def progress(entry):
        if args.verbose:
            print(
                f"episode {entry.episode} eps={entry.epsilon:.3f} loss={entry.mean_loss:.4g} "
                f"cost={entry.episode_cost:.4g} sent={entry.transmissions}",
                file=sys.stderr,
            )

    ckpt, log = train_interq(m, sol, tc, on_episode=progress)
    path = run.out / "checkpoint.json"
    save_checkpoint(ckpt, path)
    run.track(path)
    path = run.out / "train_log.csv"
    write_log_csv(log, path)
    run.track(path)
    run.finish()
    return 0


def _policy_spec(args, section) -> Dict[str, Any]:
    spec = dict(section.get("policy", {})) if isinstance(section.get("policy"), dict) else {}
    if args.policy is not None:
        spec = {"policy": args.policy}
    elif isinstance(section.get("policy"), str):
        spec = {"policy": section["policy"]}
    if args.tau is not None:
        spec["tau"] = args.tau
    elif "tau" in section and "tau" not in spec:
        spec["tau"] = section["tau"]
    if args.ckpt is not None:
        spec["ckpt"] = args.ckpt
    elif "ckpt" in section and "ckpt" not in spec:
        spec["ckpt"] = section["ckpt"]
    if "policy" not in spec:
        raise UsageError("no policy given (use --policy)")
    if spec["policy"] in ("periodic", "event") and "tau" not in spec:
        raise UsageError(f"policy {spec['policy']!r} needs --tau")
    if spec["policy"] == "dqn" and "ckpt" not in spec:
        raise UsageError("policy 'dqn' needs --ckpt")
    return spec


def _checked_dqn(path, m):
    ckpt = load_checkpoint(path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        check_compatibility(ckpt, m)
    for w in caught:
        print(f"interq: warning: {w.message}", file=sys.stderr)
    return ckpt


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    section = cfg.get("eval", {})
    m, sol = build_system(cfg, args.lam)
    spec = _policy_spec(args, section)
    if spec["policy"] == "dqn":
        policy = DqnPolicy(_checked_dqn(spec["ckpt"], m).params)
    else:
        policy = policy_from_config(spec)
    if args.noise_free:
        m = without_noise(m)
    horizon = int(pick(args, section, "horizon", 400))
    n = int(pick(args, section, "rollouts", 1000))
    seed = int(pick(args, section, "seed", 0))
    args.seed = seed
    rep = estimate_costs(m, sol, policy, horizon, n, seed)
    resolved = dict(cfg, eval={"policy": spec, "horizon": horizon, "rollouts": n, "seed": seed, "noise_free": args.noise_free})
    run = Run("eval", args, resolved)
    out = dict(rep.to_dict(), policy=spec)
    run.write("eval.json", dump(out))
    sys.stdout.write(dump(out))
    run.finish()
    return 0


def cmd_pareto(args) -> int:
    cfg = load_config(args.config)
    section = cfg.get("pareto", {})
    m, sol = build_system(cfg, args.lam)
    horizon = int(pick(args, section, "horizon", 400))
    n = int(pick(args, section, "rollouts", 1000))
    seed = int(pick(args, section, "seed", 0))
    args.seed = seed
    p_taus = [int(t) for t in _floats(pick(args, section, "periodic_taus", DEFAULT_PERIODIC_TAUS))]
    e_taus = _floats(pick(args, section, "event_taus", DEFAULT_EVENT_TAUS))
    rows = pareto_sweep(m, sol, "periodic", p_taus, horizon, n, seed)
    rows += pareto_sweep(m, sol, "event", e_taus, horizon, n, seed)
    ckpt_path = pick(args, section, "ckpt")
    if ckpt_path is not None:
        net = _checked_dqn(ckpt_path, m).params
        rows.append(ParetoRow("dqn", float("nan"), estimate_costs(m, sol, DqnPolicy(net), horizon, n, seed)))
    resolved = dict(
        cfg,
        pareto={"horizon": horizon, "rollouts": n, "seed": seed, "periodic_taus": p_taus, "event_taus": e_taus, "ckpt": ckpt_path},
    )
    run = Run("pareto", args, resolved)
    run.write("pareto.csv", "\n".join(pareto_csv_lines(rows)) + "\n")
    run.finish()
    return 0


def cmd_landscape(args) -> int:
    cfg = load_config(args.config)
    section = cfg.get("landscape", {})
    m, sol = build_system(cfg, args.lam)
    ckpt_path = pick(args, section, "ckpt")
    if ckpt_path is None:
        raise UsageError("landscape needs --ckpt")
    ckpt = _checked_dqn(ckpt_path, m)
    n = int(pick(args, section, "n", 10_000))
    seed = int(pick(args, section, "seed", 0))
    args.seed = seed
    b = lemma_bounds(m, sol)
    box = pick(args, section, "box")
    region = {"box": box if box is not None else default_landscape_box(b).tolist(), "n": n}
    samples, summary = landscape_scan(ckpt.params, m, sol, region=region, master_seed=seed)
    bounds = b.to_dict()
    bounds["Z"] = None
    if args.fit:
        fit = fit_boundary_ellipse(samples)
        bounds["Z"] = fit.Z.tolist()
        bounds["fit_misclassification"] = fit.misclassification
    bounds["summary"] = summary.to_dict()
    resolved = dict(cfg, landscape={"ckpt": ckpt_path, "n": n, "seed": seed, "box": region["box"], "fit": args.fit})
    run = Run("landscape", args, resolved)
    run.write("landscape.csv", "\n".join(landscape_csv_lines(samples)) + "\n")
    run.write("bounds.json", dump(bounds))
    run.finish()
    return 0


ORACLE_KEYS = ("a", "b", "q", "r", "k_w", "gamma", "lambda")


def cmd_oracle1d(args) -> int:
    cfg = read_json(args.config)
    if not isinstance(cfg, dict):
        raise ValidationError(f"{args.config}: config must be a JSON object")
    d = cfg.get("oracle1d", cfg)
    missing = [k for k in ORACLE_KEYS if k not in d]
    if missing:
        raise ValidationError(f"scalar config missing keys: {', '.join(missing)}")
    lam = args.lam if args.lam is not None else d["lambda"]
    table = value_iteration_1d(
        d["a"], d["b"], d["q"], d["r"], d["k_w"], d["gamma"], lam,
        half_width=float(d.get("half_width", 20.0)),
        n_points=int(d.get("points", 2001)),
        n_quad=int(d.get("quad", 33)),
        noise_half_width=d.get("noise_half_width"),
    )
    resolved = dict(d, **{"lambda": lam})
    run = Run("oracle1d", args, resolved)
    run.write("value_table.csv", "\n".join(table.csv_lines()) + "\n")
    result = {
        "threshold": table.threshold,
        "bellman_residual": table.bellman_residual,
        "iterations": table.iterations,
        "gamma_cost": table.gamma_cost,
        "V0": float(table.V[len(table.grid) // 2]),
    }
    run.write("oracle1d.json", dump(result))
    sys.stdout.write(dump(result))
    run.finish()
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="interq", description="Learned communication scheduling for LQG control.")
    parser.add_argument("--version", action="version", version=f"interq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="directory for outputs and the run manifest")
        p.add_argument("--lambda", dest="lam", type=float, help="override the scheduling cost")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")
        return p

    p = common(sub.add_parser("solve", help="Riccati solution and Lemma bounds as JSON"), seed=False)
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("train", help="train the scheduling network"))
    p.add_argument("--episodes", type=int)
    p.add_argument("-v", "--verbose", action="store_true", help="per-episode progress on stderr")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="Monte Carlo costs of one policy"))
    p.add_argument("--policy", choices=["dqn", "periodic", "event", "always", "never"])
    p.add_argument("--tau", type=float)
    p.add_argument("--ckpt")
    p.add_argument("--horizon", type=int)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--noise-free", action="store_true", help="evaluate with W = 0")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("pareto", help="periodic/event sweeps plus an optional DQN point"))
    p.add_argument("--ckpt")
    p.add_argument("--periodic-taus", dest="periodic_taus", help="comma-separated periods")
    p.add_argument("--event-taus", dest="event_taus", help="comma-separated thresholds")
    p.add_argument("--horizon", type=int)
    p.add_argument("--rollouts", type=int)
    p.set_defaults(func=cmd_pareto)

    p = common(sub.add_parser("landscape", help="greedy actions against the Lemma classification"))
    p.add_argument("--ckpt")
    p.add_argument("--n", type=int)
    p.add_argument("--box", type=float, nargs="+")
    p.add_argument("--fit", action="store_true", help="fit a boundary ellipse")
    p.set_defaults(func=cmd_landscape)

    p = common(sub.add_parser("oracle1d", help="value iteration for a scalar plant"), seed=False)
    p.set_defaults(func=cmd_oracle1d)
    return parser


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or exc.__class__.__name__


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "periodic_taus", None) is not None:
            args.periodic_taus = _floats(args.periodic_taus)
        if getattr(args, "event_taus", None) is not None:
            args.event_taus = _floats(args.event_taus)
        return args.func(args)
    except (ValidationError, ValueError, KeyError, TypeError) as exc:
        print(f"interq: invalid input: {exc.__class__.__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (InterqRuntimeError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"interq: runtime error: {exc.__class__.__name__}: {_one_line(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
