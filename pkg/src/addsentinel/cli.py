"""Command-line entry point: fit, calibrate, score, simulate, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command writes a run manifest with all resolved parameters; re-running
`simulate` on its own manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .calibration import calibrate_tau
from .discriminant import discriminant_from_reference
from .errors import DataError, NumericError, PremiseViolated, SentinelError
from .gateway import DefenseEngine
from .reference import fit_reference, load_reference, save_reference
from .scenarios import SCENARIOS, Cfg, run_bench, run_scenario
from .scoring import DetectorConfig
from .streamio import format_kv, read_kv, read_stream, write_text_atomic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="addsentinel",
                     description="Account-aware query-stream defense toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit per-class references from a labeled stream")
    p_fit.add_argument("stream", help="ADDQRY01 file with ground-truth labels")
    p_fit.add_argument("--model", required=True, help="output ADDREF01 path")
    p_fit.add_argument("--out", default=None, help="directory for the run manifest")

    p_cal = sub.add_parser("calibrate", help="choose tau from a benign stream")
    p_cal.add_argument("stream", help="labeled benign ADDQRY01 file")
    p_cal.add_argument("--model", required=True)
    p_cal.add_argument("--seeds", required=True, help="ADDQRY01 file of window seeds")
    p_cal.add_argument("--config", default=None, help="engine key=value config")
    p_cal.add_argument("--gamma", type=float, default=None)
    p_cal.add_argument("--seed", type=int, default=None)
    p_cal.add_argument("--variant", choices=("add", "ew", "gdd", "msp", "energy"))
    p_cal.add_argument("--window-size", type=int, default=None)
    p_cal.add_argument("--out", default=".", help="output directory")

    p_score = sub.add_parser("score", help="score a query stream, one verdict per query")
    p_score.add_argument("stream", help="ADDQRY01 file")
    p_score.add_argument("--model", required=True)
    p_score.add_argument("--seeds", required=True, help="ADDQRY01 file of window seeds")
    p_score.add_argument("--config", default=None, help="engine key=value config")
    p_score.add_argument("--seed", type=int, default=None)
    p_score.add_argument("--variant", choices=("add", "ew", "gdd", "msp", "energy"))
    p_score.add_argument("--window-size", type=int, default=None)
    p_score.add_argument("--tau", type=float, default=None)
    p_score.add_argument("--response-mode", choices=("hard", "soft"), default=None)
    p_score.add_argument("--out", default=".", help="output directory")

    p_sim = sub.add_parser("simulate", help="run a bundled synthetic scenario")
    p_sim.add_argument("--config", required=True, help="scenario key=value config")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--variant", choices=("add", "ew", "gdd", "msp", "energy"))
    p_sim.add_argument("--window-size", type=int, default=None)
    p_sim.add_argument("--tau", type=float, default=None)
    p_sim.add_argument("--out", default=".", help="output directory")

    p_bench = sub.add_parser("bench", help="measure scoring latency and memory")
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--window-size", type=int, default=None)
    p_bench.add_argument("--out", default=".", help="output directory")
    return parser


def _engine_config(raw: dict[str, str], args) -> tuple[DetectorConfig, int, str]:
    """Engine settings from config keys (variant, n, tau, epsilon, seed,
    response_mode), overridden by CLI flags where given."""
    variant = args.variant or raw.get("variant", "add")
    window = args.window_size or int(raw.get("n", 64))
    tau = getattr(args, "tau", None)
    if tau is None:
        tau = float(raw.get("tau", math.inf))
    epsilon = float(raw.get("epsilon", 1e-6))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    mode = getattr(args, "response_mode", None) or raw.get("response_mode", "hard")
    config = DetectorConfig(variant=variant, window_size=window, tau=tau,
                            epsilon=epsilon)
    return config, seed, mode


def _manifest_path(outdir: Path, command: str) -> Path:
    return outdir / f"{command}_manifest.cfg"


def cmd_fit(args) -> int:
    accounts, features, labels = read_stream(args.stream)
    if labels.min() < 0:
        raise DataError("fit requires ground-truth labels >= 0 on every record")
    model = fit_reference(features, labels)
    save_reference(model, args.model)
    print(f"d = {model.dim}")
    print(f"K = {model.num_classes}")
    for cid, stats in model.classes:
        print(f"class {cid}: n = {stats.count}")
    outdir = Path(args.out) if args.out else Path(args.model).parent
    outdir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(_manifest_path(outdir, "fit"), format_kv({
        "command": "fit", "stream": args.stream, "model": args.model,
        "records": str(len(accounts)),
    }))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model = load_reference(args.model)
    raw = read_kv(args.config) if args.config else {}
    config, seed, _ = _engine_config(raw, args)
    gamma = args.gamma if args.gamma is not None else float(raw.get("gamma", 1e-4))
    _, seed_features, _ = read_stream(args.seeds)
    _, features, labels = read_stream(args.stream)
    if labels.min() < 0:
        raise DataError("calibration stream needs ground-truth labels >= 0")
    classifier = discriminant_from_reference(model, jitter=config.epsilon)
    report = calibrate_tau(model, (features, labels), classifier, gamma,
                           config=config, seed_features=seed_features, seed=seed)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = {
        "gamma": repr(report.gamma),
        "acc_star": repr(report.acc_star),
        "achieved_acc": repr(report.achieved_acc),
        "tau": repr(report.tau),
        "unachievable": str(report.unachievable).lower(),
    }
    write_text_atomic(outdir / "calibration.txt", format_kv(lines))
    sweep = "tau,defended_accuracy\n" + "".join(
        f"{t!r},{a!r}\n" for t, a in report.sweep)
    write_text_atomic(outdir / "calibration_sweep.csv", sweep)
    write_text_atomic(_manifest_path(outdir, "calibrate"), format_kv({
        "command": "calibrate", "model": args.model, "stream": args.stream,
        "seeds": args.seeds, "gamma": repr(gamma), "seed": str(seed),
        "variant": config.variant, "n": str(config.window_size),
        "epsilon": repr(config.epsilon),
    }))
    print(format_kv(lines), end="")
    return EXIT_OK


def cmd_score(args) -> int:
    model = load_reference(args.model)
    raw = read_kv(args.config) if args.config else {}
    config, seed, mode = _engine_config(raw, args)
    _, seed_features, _ = read_stream(args.seeds)
    accounts, features, labels = read_stream(args.stream)
    classifier = discriminant_from_reference(model, jitter=config.epsilon)
    engine = DefenseEngine(model, classifier, seed_features, config, seed=seed,
                           response_mode=mode)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["account_id,score,malicious,returned_class"]
    for account, feature in zip(accounts, features):
        resp = engine.submit(account, feature[None, :])
        lines.append(f"{account},{resp.verdict.score!r},"
                     f"{int(resp.verdict.is_malicious)},"
                     f"{int(np.argmax(resp.labels[0]))}")
    write_text_atomic(outdir / "verdicts.csv", "\n".join(lines) + "\n")
    write_text_atomic(_manifest_path(outdir, "score"), format_kv({
        "command": "score", "model": args.model, "stream": args.stream,
        "seeds": args.seeds, "seed": str(seed), "variant": config.variant,
        "n": str(config.window_size), "tau": repr(config.tau),
        "epsilon": repr(config.epsilon), "response_mode": mode,
    }))
    print(f"scored {len(accounts)} queries -> {outdir / 'verdicts.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    raw = read_kv(args.config)
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.variant is not None:
        raw["detector.variant"] = args.variant
    if args.window_size is not None:
        raw["detector.window"] = str(args.window_size)
    if args.tau is not None:
        raw["detector.tau"] = repr(args.tau)
    cfg = Cfg(raw)
    scenario = cfg.get_str("scenario", "detection")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report = run_scenario(scenario, cfg, outdir)
    write_text_atomic(_manifest_path(outdir, "simulate"),
                      cfg.manifest({"scenario": scenario}))
    for key, value in report.items():
        print(f"{key} = {value}")
    return EXIT_OK


def cmd_bench(args) -> int:
    raw = read_kv(args.config) if args.config else {}
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if args.window_size is not None:
        raw["bench.window"] = str(args.window_size)
    cfg = Cfg(raw)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report = run_bench(cfg, outdir)
    write_text_atomic(_manifest_path(outdir, "bench"), cfg.manifest())
    for key, value in report.items():
        print(f"{key} = {value}")
    return EXIT_OK


_COMMANDS = {
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
    "score": cmd_score,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, PremiseViolated) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SentinelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
