"""Bundled simulation scenarios behind the `simulate` and `bench` commands.

Each scenario resolves its parameters from a key=value config (missing keys
fall back to bundled defaults), runs deterministically from the seed, and
writes plain-text outputs plus a manifest of every resolved key. Re-running
a manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError, PremiseViolated
from .gateway import DefenseEngine
from .metrics import aupr, auroc, fpr_at_tpr, separation_gap
from .reference import ReferenceModel, pooled_moments
from .scoring import DetectorConfig, prepare_reference, score_add, score_ew, score_gdd
from .streamio import format_kv, write_stream, write_text_atomic
from .synthetic import (
    StreamSpec,
    SyntheticWorld,
    adaptive_engine,
    count_missed,
    fit_world_reference,
    gen_stream,
    make_world,
    missed_count_formula,
    sample_training,
)

SCENARIOS = ("detection", "separation-study", "label-subset", "adaptive")


class Cfg:
    """Config lookups that record every resolved value for the manifest."""

    def __init__(self, raw: dict[str, str]):
        self.raw = dict(raw)
        self.resolved: dict[str, str] = {}

    def _get(self, key: str, default, cast):
        raw = self.raw.get(key)
        if raw is None or raw == "":
            value = default
        else:
            try:
                value = cast(raw)
            except (TypeError, ValueError) as exc:
                raise DataError(f"config key {key}: cannot parse {raw!r}") from exc
        self.resolved[key] = "" if value is None else str(value)
        return value

    def get_int(self, key: str, default: int) -> int:
        return self._get(key, default, int)

    def get_float(self, key: str, default: float) -> float:
        return self._get(key, default, float)

    def get_opt_float(self, key: str, default: float | None = None) -> float | None:
        return self._get(key, default, float)

    def get_str(self, key: str, default: str) -> str:
        return self._get(key, default, str)

    def get_ints(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        return self._get(key, default,
                         lambda s: tuple(int(v) for v in s.split(",") if v.strip()))

    def get_floats(self, key: str, default: tuple[float, ...]) -> tuple[float, ...]:
        return self._get(key, default,
                         lambda s: tuple(float(v) for v in s.split(",") if v.strip()))

    def manifest(self, extra: dict[str, str] | None = None) -> str:
        items = dict(self.resolved)
        if extra:
            items.update(extra)
        return format_kv(sorted(items.items()))


def _world_from_cfg(cfg: Cfg, seed: int, *, dim=8, classes=10, surrogates=None,
                    separation=8.0, cov_scale=1.0, spread=None,
                    surrogate_radius=None, surrogate_cov_scale=None) -> SyntheticWorld:
    k = cfg.get_int("world.classes", classes)
    return make_world(
        cfg.get_int("world.dim", dim),
        k,
        cfg.get_int("world.surrogates", surrogates if surrogates is not None else k),
        separation=cfg.get_float("world.separation", separation),
        seed=seed,
        cov_scale=cfg.get_float("world.cov_scale", cov_scale),
        spread=cfg.get_opt_float("world.spread", spread),
        surrogate_radius=cfg.get_opt_float("world.surrogate_radius", surrogate_radius),
        surrogate_cov_scale=cfg.get_opt_float("world.surrogate_cov_scale",
                                              surrogate_cov_scale),
    )


def _detector_from_cfg(cfg: Cfg, *, variant="add", window=8) -> DetectorConfig:
    return DetectorConfig(
        variant=cfg.get_str("detector.variant", variant),
        window_size=cfg.get_int("detector.window", window),
        tau=cfg.get_float("detector.tau", math.inf),
        epsilon=cfg.get_float("detector.epsilon", 1e-6),
        energy_temperature=cfg.get_float("detector.energy_temperature", 1.0),
    )


def _verdict_csv(rows) -> str:
    lines = ["account_id,score,malicious,returned_class"]
    lines += [f"{acc},{score!r},{int(flag)},{label}" for acc, score, flag, label in rows]
    return "\n".join(lines) + "\n"


def _replay(engine: DefenseEngine, account: str, features) -> list[tuple]:
    rows = []
    for f in features:
        resp = engine.submit(account, f[None, :])
        rows.append((account, resp.verdict.score, resp.verdict.is_malicious,
                     int(np.argmax(resp.labels[0]))))
    return rows


def run_detection(cfg: Cfg, outdir) -> dict[str, str]:
    """Score one benign and one malicious stream, report detection metrics."""
    seed = cfg.get_int("seed", 42)
    world = _world_from_cfg(cfg, seed)
    reference = fit_world_reference(world, cfg.get_int("reference.per_class", 1500))
    seeds, _ = sample_training(world, cfg.get_int("engine.seed_pool", 200),
                               label="seed-pool")
    config = _detector_from_cfg(cfg)
    engine = DefenseEngine(reference, world.classifier(), seeds, config, seed=seed)

    subset = cfg.get_ints("benign.subset", ())
    shift = cfg.get_floats("benign.shift", ())
    benign_kind = cfg.get_str("benign.kind", "benign_shift" if (subset or shift)
                              else "benign_id")
    benign_spec = StreamSpec(benign_kind, cfg.get_int("benign.length", 2000),
                             shift=shift or None, class_subset=subset or None)
    malicious_spec = StreamSpec("malicious", cfg.get_int("malicious.length", 2000))
    benign = gen_stream(world, benign_spec)
    malicious = gen_stream(world, malicious_spec)

    rows_b = _replay(engine, "benign", benign.features)
    rows_m = _replay(engine, "malicious", malicious.features)
    scores_b = [r[1] for r in rows_b]
    scores_m = [r[1] for r in rows_m]
    stream = [(s, True) for s in scores_b] + [(s, False) for s in scores_m]
    tpr_target = cfg.get_float("metrics.tpr_target", 0.95)
    report = {
        "fpr_at_tpr": repr(fpr_at_tpr(stream, tpr_target)),
        "auroc": repr(auroc(stream)),
        "aupr": repr(aupr(stream)),
        "separation_gap": repr(separation_gap(scores_b, scores_m)),
    }

    files = {}
    write_stream(outdir / "benign.qry", benign.features, benign.labels, "benign")
    write_stream(outdir / "malicious.qry", malicious.features, malicious.labels,
                 "malicious")
    write_text_atomic(outdir / "verdicts_benign.csv", _verdict_csv(rows_b))
    write_text_atomic(outdir / "verdicts_malicious.csv", _verdict_csv(rows_m))
    write_text_atomic(outdir / "metrics.txt", format_kv(report))
    files.update(report)
    return files


def pure_window_gap(world: SyntheticWorld, reference: ReferenceModel, *,
                    window_size: int, windows_per_side: int, variant: str = "add",
                    epsilon: float = 1e-6, trial: int = 0) -> float:
    """Score assembled windows of one kind each and return min(mal) - max(benign).

    Each window holds exactly ``window_size`` fresh samples of one stream
    kind, matching how the engine scores a batch that fully refills an
    account's window.
    """
    n = window_size * windows_per_side
    benign = gen_stream(world, StreamSpec("benign_id", n, salt=f"gap-b{trial}"))
    malicious = gen_stream(world, StreamSpec("malicious", n, salt=f"gap-m{trial}"))
    classifier = world.classifier()
    prepared = prepare_reference(reference, epsilon)
    global_stats = None
    scores = {"benign": [], "malicious": []}
    for name, batch in (("benign", benign), ("malicious", malicious)):
        classes, _ = classifier.predict_batch(batch.features)
        for i in range(windows_per_side):
            feats = batch.features[i * window_size:(i + 1) * window_size]
            cls = classes[i * window_size:(i + 1) * window_size]
            if variant == "add":
                s = score_add(reference, (feats, cls), epsilon=epsilon, prepared=prepared)
            elif variant == "ew":
                s = score_ew(reference, (feats, cls), epsilon=epsilon, prepared=prepared)
            else:
                if global_stats is None:
                    global_stats = pooled_moments(reference)
                s = score_gdd(global_stats, (feats, cls), epsilon=epsilon)
            scores[name].append(s)
    return separation_gap(scores["benign"], scores["malicious"])


def run_separation_study(cfg: Cfg, outdir) -> dict[str, str]:
    """Mean score gap for each window size, averaged over seeded trials."""
    seed = cfg.get_int("seed", 33)
    world = _world_from_cfg(cfg, seed, separation=6.0)
    reference = fit_world_reference(world, cfg.get_int("reference.per_class", 1500))
    sizes = cfg.get_ints("study.window_sizes", (4, 8, 16, 32))
    trials = cfg.get_int("study.trials", 20)
    dots = cfg.get_int("study.windows_per_side", 48)
    epsilon = cfg.get_float("detector.epsilon", 1e-6)

    lines = ["window_size,trial,gap"]
    means = []
    for n in sizes:
        gaps = [pure_window_gap(world, reference, window_size=n,
                                windows_per_side=dots, epsilon=epsilon, trial=t)
                for t in range(trials)]
        lines += [f"{n},{t},{g!r}" for t, g in enumerate(gaps)]
        means.append(float(np.mean(gaps)))
    write_text_atomic(outdir / "gap_vs_window.csv", "\n".join(lines) + "\n")
    nondecreasing = all(means[i] <= means[i + 1] for i in range(len(means) - 1))
    report = {f"mean_gap_n{n}": repr(m) for n, m in zip(sizes, means)}
    report["nondecreasing"] = str(nondecreasing).lower()
    write_text_atomic(outdir / "metrics.txt", format_kv(report))
    return report


LABEL_SUBSET_DEFAULTS = dict(
    dim=8, classes=10, surrogates=2, separation=5.0, spread=8.0,
    surrogate_radius=5.5, surrogate_cov_scale=0.3, window=4)


def run_label_subset(cfg: Cfg, outdir) -> dict[str, str]:
    """Compare scoring variants when benign traffic covers a class subset."""
    base_seed = cfg.get_int("seed", 500)
    trials = cfg.get_int("variants.trials", 10)
    per_side = cfg.get_int("stream.per_side", 600)
    subset = cfg.get_ints("benign.subset", (0, 1, 2))
    variants = ("add", "ew", "gdd")
    d = LABEL_SUBSET_DEFAULTS
    lines = ["variant,trial,auroc"]
    totals = {v: [] for v in variants}
    for t in range(trials):
        world = _world_from_cfg(
            cfg, base_seed + t, dim=d["dim"], classes=d["classes"],
            surrogates=d["surrogates"], separation=d["separation"],
            spread=d["spread"], surrogate_radius=d["surrogate_radius"],
            surrogate_cov_scale=d["surrogate_cov_scale"])
        reference = fit_world_reference(world, cfg.get_int("reference.per_class", 1500))
        seeds, _ = sample_training(world, cfg.get_int("engine.seed_pool", 200),
                                   label="seed-pool")
        benign = gen_stream(world, StreamSpec("benign_shift", per_side,
                                              class_subset=subset))
        malicious = gen_stream(world, StreamSpec("malicious", per_side))
        classifier = world.classifier()
        window = cfg.get_int("detector.window", d["window"])
        epsilon = cfg.get_float("detector.epsilon", 1e-6)
        for variant in variants:
            config = DetectorConfig(variant=variant, window_size=window,
                                    epsilon=epsilon)
            engine = DefenseEngine(reference, classifier, seeds, config,
                                   seed=cfg.get_int("engine.seed_base", 40) + t)
            sb = [engine.submit("b", f[None, :]).verdict.score for f in benign.features]
            sm = [engine.submit("m", f[None, :]).verdict.score
                  for f in malicious.features]
            value = auroc([(s, True) for s in sb] + [(s, False) for s in sm])
            totals[variant].append(value)
            lines.append(f"{variant},{t},{value!r}")
    write_text_atomic(outdir / "variant_auroc.csv", "\n".join(lines) + "\n")
    means = {v: float(np.mean(s)) for v, s in totals.items()}
    report = {f"auroc_{v}": repr(m) for v, m in means.items()}
    report["margin_add_vs_gdd"] = repr(means["add"] - means["gdd"])
    report["margin_add_vs_ew"] = repr(means["add"] - means["ew"])
    write_text_atomic(outdir / "metrics.txt", format_kv(report))
    return report


def run_adaptive(cfg: Cfg, outdir) -> dict[str, str]:
    """Evasion counts for the mixing attack across window sizes."""
    seed = cfg.get_int("seed", 77)
    world = _world_from_cfg(cfg, seed, surrogates=1, separation=150.0, cov_scale=1e-6)
    reference = fit_world_reference(world, cfg.get_int("reference.per_class", 400))
    bl_budget = cfg.get_int("adaptive.bl_budget", 100)
    evade = cfg.get_float("adaptive.evade_percent", 10.0)
    sizes = cfg.get_ints("adaptive.window_sizes", (1, 2, 4, 8, 16, 32))
    engine_seed = cfg.get_int("engine.seed_base", 9)
    spec = StreamSpec("adaptive_mix", bl_budget=bl_budget, evade_percent=evade,
                      bl_exact=True)
    epsilon = cfg.get_float("detector.epsilon", 1e-6)
    lines = ["window_size,missed,formula,match"]
    all_match = True
    for n in sizes:
        config = DetectorConfig(variant="add", window_size=n, epsilon=epsilon)
        try:
            engine = adaptive_engine(world, reference, spec, config, seed=engine_seed)
            missed = count_missed(world, engine, spec)
            expected = missed_count_formula(bl_budget, evade, n)
            match = missed == expected
        except PremiseViolated as exc:
            lines.append(f"{n},premise_violated,,false  # {exc}")
            all_match = False
            continue
        all_match &= match
        lines.append(f"{n},{missed},{expected},{str(match).lower()}")
    write_text_atomic(outdir / "missed_counts.csv", "\n".join(lines) + "\n")
    report = {"all_match": str(all_match).lower(),
              "bl_budget": str(bl_budget), "evade_percent": repr(evade)}
    write_text_atomic(outdir / "metrics.txt", format_kv(report))
    return report


def run_scenario(name: str, cfg: Cfg, outdir) -> dict[str, str]:
    if name == "detection":
        return run_detection(cfg, outdir)
    if name == "separation-study":
        return run_separation_study(cfg, outdir)
    if name == "label-subset":
        return run_label_subset(cfg, outdir)
    if name == "adaptive":
        return run_adaptive(cfg, outdir)
    raise DataError(f"unknown scenario {name!r}, expected one of {SCENARIOS}")


def run_bench(cfg: Cfg, outdir) -> dict[str, str]:
    """Measure per-query scoring latency and per-account memory."""
    seed = cfg.get_int("seed", 7)
    dim = cfg.get_int("bench.dim", 256)
    classes = cfg.get_int("bench.classes", 10)
    window = cfg.get_int("bench.window", 64)
    iterations = cfg.get_int("bench.iterations", 2000)
    world = make_world(dim, classes, separation=cfg.get_float("world.separation", 6.0),
                       seed=seed)
    reference = fit_world_reference(world, cfg.get_int("reference.per_class", 600))
    seeds, _ = sample_training(world, max(4 * window, 256), label="seed-pool")
    config = DetectorConfig(variant=cfg.get_str("detector.variant", "add"),
                            window_size=window,
                            epsilon=cfg.get_float("detector.epsilon", 1e-6))
    engine = DefenseEngine(reference, world.classifier(), seeds, config, seed=seed)
    stream = gen_stream(world, StreamSpec("benign_id", iterations))
    for f in stream.features:
        engine.submit("bench", f[None, :])
    stats = engine.engine_stats()
    report = {
        "dim": str(dim), "classes": str(classes), "window_size": str(window),
        "iterations": str(iterations),
        "score_latency_p50_ms": f"{stats.score_latency_p50_ms:.6f}",
        "score_latency_p95_ms": f"{stats.score_latency_p95_ms:.6f}",
        "score_latency_p99_ms": f"{stats.score_latency_p99_ms:.6f}",
        "window_feature_bytes": str(stats.window_feature_bytes),
        "max_total_window_feature_bytes": str(stats.max_total_window_feature_bytes),
    }
    write_text_atomic(outdir / "latency_report.txt", format_kv(report))
    return report
