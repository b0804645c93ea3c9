"""texrec: active tactile texture recognition at desk scale.

A trial places a reference fabric next to four comparison fabrics, exactly
one of which matches. A small dropout CNN is trained on-the-fly from touch
observations; Monte-Carlo dropout supplies the uncertainty that the Variance
and Entropy strategies use to pick the next touch, with Random and YOTO
(one initial pass, then predict) as baselines. The harness runs full
strategy/trial/run grids reproducibly and the analysis module compares
exploration behavior via Jensen-Shannon distances.
"""

__version__ = "0.1.0"

from .dataset import (  # noqa: F401
    AugmentedSource,
    Dataset,
    FileSource,
    SyntheticClassParams,
    SyntheticSource,
    TextureImage,
    TouchSampler,
    augment_rotations,
    generate_synthetic,
    load_dataset,
    rotate_image,
    save_dataset,
    synthetic_draw,
)
from .classifier import (  # noqa: F401
    Classifier,
    ClassifierConfig,
    PredictiveSample,
    ReferenceSet,
    TrainStats,
    gradient_check,
    init_classifier,
    load_classifier,
    predict_deterministic,
    predict_mc,
    predict_mc_probs,
    predict_reference,
    save_classifier,
    train_epochs,
)
from .engine import (  # noqa: F401
    EngineParams,
    RoundMetrics,
    StrategyKind,
    TouchRecord,
    TrialResult,
    TrialSpec,
    acquisition_scores,
    placement_suite,
    run_trial,
    sample_trials,
    select_next,
)
from .analysis import (  # noqa: F401
    ConfusionMatrix,
    ExplorationProfile,
    HumanLog,
    compare_strategies,
    confusion_matrix,
    exploration_profile,
    js_distance,
    load_human_logs,
    most_touched_equals_prediction,
    summarize,
)
from .harness import (  # noqa: F401
    ExperimentConfig,
    ablation_sweep,
    analyze,
    build_config,
    build_dataset,
    build_trials,
    derive_seed,
    load_config,
    rerun_from_manifest,
    run_experiment,
    supervised_classification,
)
