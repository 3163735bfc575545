"""Synthetic worlds and query streams for exercising the defense end to end.

A world holds K training-class Gaussians and a disjoint surrogate family of
K' Gaussians whose means are kept at a configurable distance from every
training mean (measured in units of the average generator standard
deviation). Streams cover in-distribution benign traffic, shifted benign
traffic (feature shift and class-subset restriction), surrogate malicious
traffic, and the adaptive mixing attack that interleaves benign-looking
samples among malicious-looking ones.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import substream
from .discriminant import GaussianDiscriminant
from .errors import InvalidSubset, PremiseViolated, SeparationInfeasible
from .gateway import DefenseEngine, QueryRequest
from .reference import ReferenceModel, fit_reference
from .scoring import DetectorConfig

STREAM_KINDS = ("benign_id", "benign_shift", "malicious", "adaptive_mix")


@dataclass(frozen=True)
class SyntheticWorld:
    dim: int
    seed: int
    separation: float
    class_means: np.ndarray       # (K, d)
    class_covs: np.ndarray        # (K, d, d)
    surrogate_means: np.ndarray   # (K', d)
    surrogate_covs: np.ndarray    # (K', d, d)

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def num_surrogates(self) -> int:
        return self.surrogate_means.shape[0]

    def classifier(self) -> GaussianDiscriminant:
        return GaussianDiscriminant(self.class_means, self.class_covs)


@dataclass(frozen=True)
class StreamSpec:
    """What to generate: kind, length, and the kind-specific knobs.

    For ``adaptive_mix`` the length is fixed to bl_budget * (1 + M) with
    M = ceil(100 / evade_percent) - 1: one benign-looking sample followed by
    M malicious-looking ones, repeated.
    """

    kind: str
    length: int = 0
    shift: tuple[float, ...] | None = None
    class_subset: tuple[int, ...] | None = None
    bl_budget: int = 0
    evade_percent: float = 0.0
    bl_exact: bool = False
    salt: str = ""

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.kind == "adaptive_mix":
            if self.bl_budget < 1 or not 0.0 < self.evade_percent <= 100.0:
                raise ValueError("adaptive_mix needs bl_budget >= 1 and "
                                 "evade_percent in (0, 100]")
            expect = self.bl_budget * (1 + self.ml_per_bl)
            if self.length not in (0, expect):
                raise ValueError(f"adaptive_mix length must be {expect}")
            object.__setattr__(self, "length", expect)
        elif self.length < 1:
            raise ValueError("length must be >= 1")
        if self.class_subset is not None and len(self.class_subset) == 0:
            raise InvalidSubset("class subset must be nonempty")

    @property
    def ml_per_bl(self) -> int:
        return math.ceil(100.0 / self.evade_percent) - 1


@dataclass(frozen=True)
class StreamBatch:
    features: np.ndarray    # (n, d) float64
    labels: np.ndarray      # (n,) int64, -1 where no ground truth
    malicious: np.ndarray   # (n,) bool

    def __len__(self) -> int:
        return self.features.shape[0]


def make_world(dim: int, num_classes: int, num_surrogates: int | None = None,
               separation: float = 4.0, seed: int = 0, *, cov_scale: float = 1.0,
               surrogate_cov_scale: float | None = None,
               spread: float | None = None, surrogate_radius: float | None = None,
               max_tries: int = 200) -> SyntheticWorld:
    """Build a reproducible world with the requested train/surrogate separation.

    Covariances are A A^T / d + 0.1 I (scaled by ``cov_scale``) from
    standard-normal A. Training means are placed at per-coordinate scale
    ``spread`` * sigma_bar (default: ``separation``). Surrogate means are
    rejection-sampled until every train-surrogate pair is at least
    ``separation`` * sigma_bar apart; by default they are drawn like
    training means (growing the placement scale when stuck), while
    ``surrogate_radius`` instead puts each one on a shell of that radius
    (in sigma_bar units) around a randomly chosen training mean, keeping
    surrogates at a controlled distance from the training constellation.
    """
    if dim < 1 or num_classes < 1:
        raise ValueError("dim and num_classes must be >= 1")
    if separation <= 0:
        raise ValueError("separation must be > 0")
    if surrogate_radius is not None and surrogate_radius < separation:
        raise ValueError("surrogate_radius must be >= separation")
    k2 = num_classes if num_surrogates is None else int(num_surrogates)
    if k2 < 1:
        raise ValueError("num_surrogates must be >= 1")
    rng = substream(seed, "world")

    def draw_covs(count: int, scale: float) -> np.ndarray:
        out = np.empty((count, dim, dim))
        for i in range(count):
            a = rng.standard_normal((dim, dim))
            out[i] = (a @ a.T / dim + 0.1 * np.eye(dim)) * scale
        return out

    class_covs = draw_covs(num_classes, cov_scale)
    surrogate_covs = draw_covs(
        k2, cov_scale if surrogate_cov_scale is None else surrogate_cov_scale)
    all_covs = np.concatenate([class_covs, surrogate_covs])
    sigma_bar = float(np.mean([math.sqrt(np.trace(c) / dim) for c in all_covs]))
    required = separation * sigma_bar
    place_scale = (spread if spread is not None else separation) * sigma_bar
    class_means = rng.normal(0.0, place_scale, (num_classes, dim))
    surrogate_scale = max(place_scale, required)
    for attempt in range(max_tries):
        if surrogate_radius is None:
            surrogate_means = rng.normal(0.0, surrogate_scale, (k2, dim))
        else:
            anchors = class_means[rng.integers(0, num_classes, k2)]
            direction = rng.standard_normal((k2, dim))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            surrogate_means = anchors + surrogate_radius * sigma_bar * direction
        cross = np.linalg.norm(
            class_means[:, None, :] - surrogate_means[None, :, :], axis=2)
        if cross.min() >= required:
            return SyntheticWorld(
                dim=dim, seed=int(seed), separation=float(separation),
                class_means=class_means, class_covs=class_covs,
                surrogate_means=surrogate_means, surrogate_covs=surrogate_covs)
        if surrogate_radius is None and (attempt + 1) % 25 == 0:
            surrogate_scale *= 1.3
    raise SeparationInfeasible(
        f"could not place {k2} surrogate means at separation {separation} "
        f"within {max_tries} tries")


def _spec_rng(world: SyntheticWorld, spec: StreamSpec) -> np.random.Generator:
    key = "|".join([
        "stream", spec.kind, str(spec.length),
        ",".join(f"{v!r}" for v in (spec.shift or ())),
        ",".join(str(c) for c in (spec.class_subset or ())),
        str(spec.bl_budget), repr(spec.evade_percent), str(spec.bl_exact), spec.salt,
    ])
    return np.random.default_rng(
        [world.seed & 0xFFFFFFFF, zlib.crc32(key.encode("utf-8"))])


def _sample_classes(means: np.ndarray, covs: np.ndarray, classes: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    d = means.shape[1]
    out = np.empty((classes.shape[0], d))
    for cid in np.unique(classes):
        mask = classes == cid
        z = rng.standard_normal((int(mask.sum()), d))
        chol = np.linalg.cholesky(covs[cid])
        out[mask] = z @ chol.T + means[cid]
    return out


def gen_stream(world: SyntheticWorld, spec: StreamSpec) -> StreamBatch:
    """Generate the stream deterministically from (world seed, spec)."""
    rng = _spec_rng(world, spec)
    k = world.num_classes
    if spec.kind in ("benign_id", "benign_shift"):
        if spec.class_subset is not None:
            subset = np.asarray(spec.class_subset, dtype=np.int64)
            if subset.min() < 0 or subset.max() >= k:
                raise InvalidSubset(f"class subset {spec.class_subset} out of range")
            classes = subset[rng.integers(0, subset.size, spec.length)]
        else:
            classes = rng.integers(0, k, spec.length)
        feats = _sample_classes(world.class_means, world.class_covs, classes, rng)
        if spec.kind == "benign_shift" and spec.shift is not None:
            delta = np.asarray(spec.shift, dtype=np.float64)
            if delta.shape != (world.dim,):
                raise ValueError(f"shift must have dimension {world.dim}")
            feats = feats + delta
        return StreamBatch(feats, classes.astype(np.int64),
                           np.zeros(spec.length, dtype=bool))
    if spec.kind == "malicious":
        classes = rng.integers(0, world.num_surrogates, spec.length)
        feats = _sample_classes(world.surrogate_means, world.surrogate_covs,
                                classes, rng)
        return StreamBatch(feats, np.full(spec.length, -1, dtype=np.int64),
                           np.ones(spec.length, dtype=bool))
    # adaptive_mix: BL, ML * M, repeated bl_budget times; all queries malicious
    m = spec.ml_per_bl
    h = spec.bl_budget
    bl_classes = rng.integers(0, k, h)
    if spec.bl_exact:
        bl_feats = world.class_means[bl_classes]
    else:
        bl_feats = _sample_classes(world.class_means, world.class_covs, bl_classes, rng)
    ml_classes = rng.integers(0, world.num_surrogates, h * m)
    ml_feats = _sample_classes(world.surrogate_means, world.surrogate_covs,
                               ml_classes, rng)
    feats = np.empty((spec.length, world.dim))
    period = m + 1
    positions = np.arange(spec.length)
    feats[positions % period == 0] = bl_feats
    feats[positions % period != 0] = ml_feats
    return StreamBatch(feats, np.full(spec.length, -1, dtype=np.int64),
                       np.ones(spec.length, dtype=bool))


def classify_gd(world: SyntheticWorld, feature) -> tuple[int, np.ndarray]:
    """Classify one feature with the world's Gaussian discriminant."""
    return world.classifier()(np.asarray(feature, dtype=np.float64))


def sample_training(world: SyntheticWorld, per_class: int, label: str = "reference"
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Draw per_class labeled samples from every training class."""
    rng = substream(world.seed, label)
    classes = np.repeat(np.arange(world.num_classes), per_class)
    feats = _sample_classes(world.class_means, world.class_covs, classes, rng)
    return feats, classes


def sample_surrogate(world: SyntheticWorld, count: int, label: str = "surrogate-pool"
                     ) -> np.ndarray:
    """Draw surrogate features, e.g. for malicious window pre-fill."""
    rng = substream(world.seed, label)
    classes = rng.integers(0, world.num_surrogates, count)
    return _sample_classes(world.surrogate_means, world.surrogate_covs, classes, rng)


def fit_world_reference(world: SyntheticWorld, per_class: int = 2000) -> ReferenceModel:
    feats, classes = sample_training(world, per_class)
    return fit_reference(feats, classes)


@dataclass
class _BlShadow:
    """Tracks which window slots hold benign-looking entries."""

    capacity: int
    flags: list[bool] = field(default_factory=list)

    def push(self, is_bl: bool) -> None:
        self.flags.append(is_bl)
        if len(self.flags) > self.capacity:
            del self.flags[0]

    def any_bl(self) -> bool:
        return any(self.flags)


def evasion_threshold(world: SyntheticWorld, reference: ReferenceModel,
                      spec: StreamSpec, config: DetectorConfig, *, seed: int = 0,
                      seed_pool_size: int | None = None) -> float:
    """Probe the adaptive stream and pick tau separating the two window kinds.

    Requires every window containing at least one benign-looking entry to
    score strictly below every pure malicious-looking window; raises
    PremiseViolated otherwise. The returned tau is the midpoint of the gap.
    """
    probe = _adaptive_engine(world, reference, config, math.inf, seed, seed_pool_size)
    stream = gen_stream(world, spec)
    shadow = _BlShadow(config.window_size)
    period = spec.ml_per_bl + 1
    bl_scores, ml_scores = [], []
    for i, feature in enumerate(stream.features):
        resp = probe.handle_query(QueryRequest("adaptive", feature[None, :]))
        shadow.push(i % period == 0)
        (bl_scores if shadow.any_bl() else ml_scores).append(resp.verdict.score)
    ceiling = max(bl_scores)
    if not ml_scores:
        return ceiling + max(1.0, abs(ceiling))
    floor = min(ml_scores)
    if ceiling >= floor:
        raise PremiseViolated(
            f"one benign-looking entry does not dominate: max mixed score "
            f"{ceiling:.6g} >= min pure score {floor:.6g}")
    return 0.5 * (ceiling + floor)


def _adaptive_engine(world: SyntheticWorld, reference: ReferenceModel,
                     config: DetectorConfig, tau: float, seed: int,
                     seed_pool_size: int | None) -> DefenseEngine:
    pool = seed_pool_size or max(4 * config.window_size, 64)
    seeds = sample_surrogate(world, pool)
    return DefenseEngine(reference, world.classifier(), seeds,
                         replace(config, tau=tau), seed=seed)


def adaptive_engine(world: SyntheticWorld, reference: ReferenceModel,
                    spec: StreamSpec, config: DetectorConfig, *, seed: int = 0,
                    seed_pool_size: int | None = None) -> DefenseEngine:
    """Engine for the adaptive study: windows pre-filled with surrogate samples.

    Training seeds would contaminate the evasion count, so the window seed
    pool is drawn from the surrogate family instead, and tau is chosen by
    probing the stream (see evasion_threshold).
    """
    tau = evasion_threshold(world, reference, spec, config, seed=seed,
                            seed_pool_size=seed_pool_size)
    return _adaptive_engine(world, reference, config, tau, seed, seed_pool_size)


def count_missed(world: SyntheticWorld, engine: DefenseEngine, spec: StreamSpec) -> int:
    """Run the adaptive stream and count queries the engine lets through.

    Verifies the idealized evasion premise per query (windows with a
    benign-looking entry pass, pure windows are flagged) and raises
    PremiseViolated on any deviation rather than returning a silent count.
    """
    if spec.kind != "adaptive_mix":
        raise ValueError("count_missed requires an adaptive_mix spec")
    stream = gen_stream(world, spec)
    shadow = _BlShadow(engine.config.window_size)
    period = spec.ml_per_bl + 1
    missed = 0
    for i, feature in enumerate(stream.features):
        resp = engine.handle_query(QueryRequest("adaptive", feature[None, :]))
        shadow.push(i % period == 0)
        expected_benign = shadow.any_bl()
        if resp.verdict.is_malicious == expected_benign:
            raise PremiseViolated(
                f"query {i}: verdict {'malicious' if resp.verdict.is_malicious else 'benign'} "
                f"but window {'contains' if expected_benign else 'lacks'} a "
                f"benign-looking entry")
        if not resp.verdict.is_malicious:
            missed += 1
    return missed


def missed_count_formula(bl_budget: int, evade_percent: float, window_size: int) -> int:
    """Closed-form count of adaptive queries evading detection."""
    m = math.ceil(100.0 / evade_percent) - 1
    if window_size <= m:
        return (1 + (window_size - 1)) * bl_budget
    return (1 + m) * bl_budget
