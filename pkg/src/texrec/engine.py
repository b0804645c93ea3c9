"""The active-recognition trial: five initial touches, then rounds of
select-touch-retrain-predict under one of four selection strategies.

One trial holds a reference fabric and four comparison fabrics on platforms
1..4, exactly one of which matches the reference. The classifier is trained
to map comparison images to platform labels; querying it with reference
copies and averaging gives the trial's prediction. Variance and Entropy pick
the platform whose class probability is most uncertain under MC dropout;
Random picks uniformly; YOTO stops after the initial touches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifier import (
    Classifier,
    ClassifierConfig,
    ReferenceSet,
    init_classifier,
    predict_mc_probs,
    reference_prediction_from_probs,
    predict_proba,
    train_epochs,
)
from .dataset import Dataset, TouchSampler, augment_rotations
from .errors import (
    InternalError,
    ParamError,
    ShapeError,
    StrategyMisuse,
    UnknownFabric,
)


class StrategyKind(enum.Enum):
    RANDOM = "Random"
    VARIANCE = "Variance"
    ENTROPY = "Entropy"
    YOTO = "YOTO"

    @classmethod
    def parse(cls, name: str) -> "StrategyKind":
        for kind in cls:
            if kind.value.lower() == str(name).strip().lower():
                return kind
        raise ParamError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class TrialSpec:
    """One fixed arrangement: a reference fabric and four comparison fabrics."""

    reference_fabric: str
    comparison_fabrics: tuple
    max_rounds: int = 20
    seed: int = 0
    trial_id: str = "trial"

    def __post_init__(self):
        comps = tuple(self.comparison_fabrics)
        if len(comps) != 4:
            raise ParamError(f"need exactly 4 comparison fabrics, got {len(comps)}")
        matches = sum(1 for c in comps if c == self.reference_fabric)
        if matches != 1:
            raise ParamError(
                f"exactly one comparison must equal the reference fabric "
                f"{self.reference_fabric!r}; found {matches}"
            )
        if self.max_rounds < 0:
            raise ParamError("max_rounds must be >= 0")
        object.__setattr__(self, "comparison_fabrics", comps)

    @property
    def matching_platform(self) -> int:
        return self.comparison_fabrics.index(self.reference_fabric) + 1


@dataclass(frozen=True)
class EngineParams:
    """Knobs of the trial protocol itself (augmentation, schedule, sampling)."""

    copies: int = 10
    rotation_range_degrees: float = 15.0
    epochs_baseline: int = 10
    epochs_per_round: int = 10
    n_mc: int = 30
    retrain_from_scratch: bool = False

    def __post_init__(self):
        if self.copies < 1:
            raise ParamError("copies must be >= 1")
        if self.rotation_range_degrees < 0:
            raise ParamError("rotation_range_degrees must be >= 0")
        if self.epochs_baseline < 0 or self.epochs_per_round < 0:
            raise ParamError("epoch counts must be >= 0")
        if self.n_mc < 1:
            raise ParamError("n_mc must be >= 1")


@dataclass
class TouchRecord:
    round_index: int  # 0 = initial phase
    platform: int  # 0 = reference platform, 1..4 = comparisons
    image_id: str
    augmented_ids: tuple


@dataclass
class RoundMetrics:
    round_index: int
    predicted_platform: int  # 1..4
    correct: bool
    train_accuracy: float
    mean_variance: float
    mean_entropy: float
    touched_platform: int  # 0 when no touch happened this round (YOTO)
    mean_probs: np.ndarray


@dataclass
class TrialResult:
    spec: TrialSpec
    strategy: StrategyKind
    rounds: list
    touches: list
    touch_counts: np.ndarray  # length 5: reference + platforms 1..4
    final_platform: int
    n_mc: int
    training_pool_size: int
    reuse_occurred: bool

    @property
    def final_correct(self) -> bool:
        return self.spec.comparison_fabrics[self.final_platform - 1] == self.spec.reference_fabric


def acquisition_scores(mc_samples):
    """Per-platform variance and entropy-contribution scores.

    ``mc_samples`` holds, for each reference image, the same number M of
    probability vectors sampled under independent dropout masks. Returns
    (variance_scores, entropy_scores), each of length num_classes:

    * variance_scores[i]: population variance of p_i over the M samples,
      averaged over reference images;
    * entropy_scores[i]: mean over samples of -p_i ln p_i (0 ln 0 = 0),
      averaged over reference images.
    """
    if isinstance(mc_samples, np.ndarray):
        arr = mc_samples.astype(np.float64, copy=False)
        if arr.ndim != 3:
            raise ShapeError(f"expected (n_ref, M, C) array, got shape {arr.shape}")
    else:
        rows = []
        width = None
        for per_image in mc_samples:
            vecs = [np.asarray(getattr(s, "probs", s), dtype=np.float64) for s in per_image]
            if width is None:
                width = len(vecs)
            elif len(vecs) != width:
                raise ShapeError("ragged MC sample counts across reference images")
            rows.append(vecs)
        if not rows or width == 0:
            raise ShapeError("no MC samples supplied")
        arr = np.array(rows, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError("MC sample vectors have inconsistent lengths")

    variance = arr.var(axis=1, ddof=0).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(arr > 0.0, -arr * np.log(arr), 0.0)
    entropy = plogp.mean(axis=1).mean(axis=0)
    return variance, entropy


def select_next(strategy: StrategyKind, classifier: Classifier, ref: ReferenceSet,
                n_mc: int, rng) -> int:
    """Choose the comparison platform (1..4) to touch next."""
    if strategy is StrategyKind.YOTO:
        raise StrategyMisuse("YOTO never selects a next touch")
    if strategy is StrategyKind.RANDOM:
        return int(rng.integers(1, 5))
    probs = predict_mc_probs(classifier, ref.images, n_mc, rng)
    variance, entropy = acquisition_scores(probs)
    scores = variance if strategy is StrategyKind.VARIANCE else entropy
    return int(np.argmax(scores)) + 1


def _augmented(image, engine: EngineParams, rng):
    # DA off: copies = 1 with zero rotation means the raw image is used directly
    if engine.copies == 1 and engine.rotation_range_degrees == 0.0:
        return [image]
    return augment_rotations(image, engine.copies, rng, engine.rotation_range_degrees)


def run_trial(
    spec: TrialSpec,
    dataset: Dataset,
    strategy: StrategyKind,
    classifier_config: ClassifierConfig,
    engine: EngineParams,
    rng=None,
) -> TrialResult:
    """Execute one full trial and return its per-round metrics and history.

    Phase 0 touches all five platforms once, augments every touch, trains a
    baseline, then each round selects a comparison platform, touches and
    augments it, retrains, and records the reference prediction. YOTO skips
    the rounds; its baseline metrics are replicated per round so result
    tables stay aligned.
    """
    for fabric in (spec.reference_fabric, *spec.comparison_fabrics):
        if fabric not in dataset:
            raise UnknownFabric(f"trial fabric {fabric!r} not in dataset")
    if rng is None:
        rng = np.random.default_rng(spec.seed)

    sampler = TouchSampler(dataset, rng)
    touches = []
    touch_counts = np.zeros(5, dtype=np.int64)

    ref_image = sampler.sample_touch(spec.reference_fabric)
    ref_copies = _augmented(ref_image, engine, rng)
    touches.append(TouchRecord(0, 0, ref_image.image_id, tuple(im.image_id for im in ref_copies)))
    touch_counts[0] += 1
    ref = ReferenceSet(images=tuple(ref_copies))

    pool = []  # (image, platform label 0..3)
    for platform, fabric in enumerate(spec.comparison_fabrics, start=1):
        img = sampler.sample_touch(fabric)
        copies = _augmented(img, engine, rng)
        touches.append(TouchRecord(0, platform, img.image_id, tuple(im.image_id for im in copies)))
        touch_counts[platform] += 1
        pool.extend((im, platform - 1) for im in copies)

    clf = init_classifier(classifier_config, seed=int(rng.integers(2**63)))
    stats = train_epochs(clf, pool, engine.epochs_baseline, rng)

    def measure(round_index, touched_platform, train_acc):
        # one MC draw per training event; its scores also drive the next
        # selection, so reported uncertainty and the chosen touch always
        # refer to the same classifier state and sample count
        mc = predict_mc_probs(clf, ref.images, engine.n_mc, rng)
        variance, entropy = acquisition_scores(mc)
        label, mean_probs = reference_prediction_from_probs(predict_proba(clf, ref.images))
        metrics = RoundMetrics(
            round_index=round_index,
            predicted_platform=label + 1,
            correct=spec.comparison_fabrics[label] == spec.reference_fabric,
            train_accuracy=train_acc,
            mean_variance=float(variance.mean()),
            mean_entropy=float(entropy.sum()),
            touched_platform=touched_platform,
            mean_probs=mean_probs,
        )
        return metrics, (variance, entropy)

    rounds = []
    baseline, scores = measure(0, 0, stats.final_train_accuracy)
    if strategy is StrategyKind.YOTO:
        for r in range(1, spec.max_rounds + 1):
            rounds.append(
                RoundMetrics(
                    round_index=r,
                    predicted_platform=baseline.predicted_platform,
                    correct=baseline.correct,
                    train_accuracy=baseline.train_accuracy,
                    mean_variance=baseline.mean_variance,
                    mean_entropy=baseline.mean_entropy,
                    touched_platform=0,
                    mean_probs=baseline.mean_probs,
                )
            )
        final_platform = baseline.predicted_platform
    else:
        for r in range(1, spec.max_rounds + 1):
            if strategy is StrategyKind.RANDOM:
                platform = int(rng.integers(1, 5))
            else:
                which = scores[0] if strategy is StrategyKind.VARIANCE else scores[1]
                platform = int(np.argmax(which)) + 1
            if not 1 <= platform <= 4:
                raise InternalError(f"strategy produced platform {platform}")

            img = sampler.sample_touch(spec.comparison_fabrics[platform - 1])
            copies = _augmented(img, engine, rng)
            touches.append(TouchRecord(r, platform, img.image_id, tuple(im.image_id for im in copies)))
            touch_counts[platform] += 1
            pool.extend((im, platform - 1) for im in copies)

            if engine.retrain_from_scratch:
                clf = init_classifier(classifier_config, seed=int(rng.integers(2**63)))
                stats = train_epochs(clf, pool, engine.epochs_baseline + r * engine.epochs_per_round, rng)
            else:
                stats = train_epochs(clf, pool, engine.epochs_per_round, rng)

            metrics, scores = measure(r, platform, stats.final_train_accuracy)
            rounds.append(metrics)
        final_platform = rounds[-1].predicted_platform if rounds else baseline.predicted_platform

    return TrialResult(
        spec=spec,
        strategy=strategy,
        rounds=rounds,
        touches=touches,
        touch_counts=touch_counts,
        final_platform=final_platform,
        n_mc=engine.n_mc,
        training_pool_size=len(pool),
        reuse_occurred=any(sampler.reuse_flags.values()),
    )


def sample_trials(fabric_ids, n_trials, rng, max_rounds=20) -> list:
    """Uniformly sample trial arrangements from a fabric universe."""
    fabrics = sorted(fabric_ids)
    if len(fabrics) < 4:
        raise ParamError(f"need at least 4 fabrics to form a trial, got {len(fabrics)}")
    trials = []
    for t in range(n_trials):
        reference = fabrics[int(rng.integers(len(fabrics)))]
        others = [f for f in fabrics if f != reference]
        picks = list(rng.choice(len(others), size=3, replace=False))
        comps = [reference] + [others[i] for i in picks]
        order = rng.permutation(4)
        comps = tuple(comps[i] for i in order)
        trials.append(
            TrialSpec(
                reference_fabric=reference,
                comparison_fabrics=comps,
                max_rounds=max_rounds,
                seed=int(rng.integers(2**63)),
                trial_id=f"t{t:03d}",
            )
        )
    return trials


def placement_suite(fabric_ids, rng, max_rounds=20) -> list:
    """Each fabric serves as reference once per matching-platform position.

    With 8 fabrics this yields the 32-trial arrangement used for confusion
    analysis: every fabric is the reference four times, its matching
    comparison placed on each platform exactly once.
    """
    fabrics = sorted(fabric_ids)
    if len(fabrics) < 4:
        raise ParamError(f"need at least 4 fabrics, got {len(fabrics)}")
    trials = []
    t = 0
    for reference in fabrics:
        others = [f for f in fabrics if f != reference]
        for position in range(4):
            picks = list(rng.choice(len(others), size=3, replace=False))
            comps = [others[i] for i in picks]
            comps.insert(position, reference)
            trials.append(
                TrialSpec(
                    reference_fabric=reference,
                    comparison_fabrics=tuple(comps),
                    max_rounds=max_rounds,
                    seed=int(rng.integers(2**63)),
                    trial_id=f"t{t:03d}",
                )
            )
            t += 1
    return trials
