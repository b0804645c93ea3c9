"""Experiment orchestration: config parsing, seed management, the full
strategies x trials x runs grid, ablation sweeps, and results analysis.

Every run writes a manifest (resolved config, trial list, per-cell seeds)
from which it can be reproduced bit-identically; per-cell seeds are derived
by hashing, so the execution order and worker count never affect results.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    confusion_matrix,
    exploration_profile,
    js_distance,
    load_human_logs,
    most_touched_equals_prediction,
    summarize,
)
from .benchmarks import PRESETS
from .classifier import ClassifierConfig, init_classifier, predict_proba, train_epochs
from .dataset import Dataset, SyntheticClassParams, generate_synthetic, load_dataset
from .engine import (
    EngineParams,
    RoundMetrics,
    StrategyKind,
    TrialResult,
    TrialSpec,
    placement_suite,
    run_trial,
    sample_trials,
)
from .errors import (
    ConfigError,
    ManifestError,
    ParamError,
    TexrecError,
)

OUTPUT_ROOT_ENV = "TEXREC_OUTPUT_ROOT"

TRIAL_CSV_HEADER = [
    "trial_id", "run_id", "strategy", "round", "predicted", "correct",
    "train_acc", "mean_variance", "mean_entropy", "touched_platform",
]

SUMMARY_FILE_METRICS = {
    "acc": "accuracy",
    "train_acc": "train_accuracy",
    "var": "mean_variance",
    "entr": "mean_entropy",
}


# ---- configuration -----------------------------------------------------------

_DEFAULTS = {
    "dataset.kind": "synthetic",
    "dataset.path": "",
    "dataset.height": "32",
    "dataset.width": "32",
    "dataset.channels": "1",
    "synthetic.preset": "easy4",
    "synthetic.n_per_class": "20",
    "trials.mode": "sample",
    "trials.count": "20",
    "trials.file": "",
    "engine.strategies": "Variance,Entropy,Random,YOTO",
    "engine.runs": "1",
    "engine.max_rounds": "20",
    "engine.epochs_baseline": "10",
    "engine.epochs_per_round": "10",
    "engine.copies": "10",
    "engine.rotation_range_degrees": "15",
    "engine.n_mc": "30",
    "engine.retrain_from_scratch": "false",
    "classifier.conv_channels": "8,16",
    "classifier.dense_hidden_units": "64",
    "classifier.dropout_rate": "0.25",
    "classifier.learning_rate": "0.01",
    "classifier.momentum": "0.9",
    "classifier.batch_size": "8",
    "classifier.weight_init_scale": repr(2.0**0.5),
    "output.dir": "texrec_out",
    "seed": "0",
    "workers": "1",
}

_CLASS_KEY = re.compile(r"^synthetic\.class(\d+)\.(\w+)$")

_CLASS_FIELDS = {
    "orientation_degrees": float,
    "frequency": float,
    "phase_jitter": float,
    "rotation_jitter_degrees": float,
    "noise_sigma": float,
}


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines (# comments allowed) into a flat dict."""
    flat = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in flat:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        flat[key] = value
    return flat


def _parse_bool(value, key):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"field {key}: cannot parse boolean from {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_kind: str
    dataset_path: str
    height: int
    width: int
    channels: int
    synthetic_classes: Optional[tuple]
    synthetic_preset: str
    synthetic_n_per_class: int
    trials_mode: str
    trials_count: int
    trials_file: str
    strategies: tuple
    runs: int
    max_rounds: int
    engine: EngineParams
    classifier: ClassifierConfig
    output_dir: str
    master_seed: int
    workers: int
    flat: tuple  # resolved (key, value) pairs, the manifest form

    @property
    def flat_dict(self) -> dict:
        return dict(self.flat)


def build_config(flat_overrides: Optional[dict] = None) -> ExperimentConfig:
    """Resolve a flat key-value mapping against the defaults.

    Unknown keys are rejected so typos surface as ConfigError instead of
    silently running with defaults.
    """
    flat = dict(_DEFAULTS)
    class_specs = {}
    for key, value in (flat_overrides or {}).items():
        m = _CLASS_KEY.match(key)
        if m:
            ci, field_name = int(m.group(1)), m.group(2)
            if field_name not in _CLASS_FIELDS:
                raise ConfigError(f"field {key}: unknown synthetic class field {field_name!r}")
            class_specs.setdefault(ci, {})[field_name] = value
            flat[key] = str(value)
            continue
        if key not in _DEFAULTS:
            raise ConfigError(f"field {key}: unknown configuration key")
        flat[key] = str(value)

    def geti(key):
        try:
            return int(flat[key])
        except ValueError:
            raise ConfigError(f"field {key}: cannot parse integer from {flat[key]!r}") from None

    def getf(key):
        try:
            return float(flat[key])
        except ValueError:
            raise ConfigError(f"field {key}: cannot parse float from {flat[key]!r}") from None

    dataset_kind = flat["dataset.kind"]
    if dataset_kind not in ("synthetic", "files"):
        raise ConfigError(f"field dataset.kind: must be 'synthetic' or 'files', got {dataset_kind!r}")
    if dataset_kind == "files" and not flat["dataset.path"]:
        raise ConfigError("field dataset.path: required when dataset.kind=files")

    synthetic_classes = None
    if class_specs:
        classes = []
        for ci in range(len(class_specs)):
            if ci not in class_specs:
                raise ConfigError(f"field synthetic.class{ci}: class indices must be contiguous from 0")
            spec = class_specs[ci]
            if "frequency" not in spec:
                raise ConfigError(f"field synthetic.class{ci}.frequency: required")
            try:
                classes.append(
                    SyntheticClassParams(
                        orientation_degrees=float(spec.get("orientation_degrees", 0.0)),
                        frequency_cycles_per_image=float(spec["frequency"]),
                        phase_jitter=float(spec.get("phase_jitter", 0.0)),
                        placement_rotation_jitter_degrees=float(spec.get("rotation_jitter_degrees", 0.0)),
                        noise_sigma=float(spec.get("noise_sigma", 0.0)),
                    )
                )
            except (ValueError, ParamError) as exc:
                raise ConfigError(f"field synthetic.class{ci}: {exc}") from None
        synthetic_classes = tuple(classes)
    elif dataset_kind == "synthetic":
        preset_name = flat["synthetic.preset"]
        if preset_name not in PRESETS:
            raise ConfigError(
                f"field synthetic.preset: unknown preset {preset_name!r}; have {sorted(PRESETS)}"
            )
        synthetic_classes = PRESETS[preset_name]

    strategies = []
    for name in flat["engine.strategies"].split(","):
        if not name.strip():
            continue
        try:
            strategies.append(StrategyKind.parse(name))
        except ParamError as exc:
            raise ConfigError(f"field engine.strategies: {exc}") from None
    if not strategies:
        raise ConfigError("field engine.strategies: at least one strategy required")
    if len(set(strategies)) != len(strategies):
        raise ConfigError("field engine.strategies: duplicate strategies")

    trials_mode = flat["trials.mode"]
    if trials_mode not in ("sample", "placement_suite", "file"):
        raise ConfigError(f"field trials.mode: unknown mode {trials_mode!r}")
    if trials_mode == "file" and not flat["trials.file"]:
        raise ConfigError("field trials.file: required when trials.mode=file")

    try:
        conv_channels = tuple(int(c) for c in flat["classifier.conv_channels"].split(","))
        classifier = ClassifierConfig(
            height=geti("dataset.height"),
            width=geti("dataset.width"),
            channels=geti("dataset.channels"),
            conv_channels=conv_channels,
            dense_hidden_units=geti("classifier.dense_hidden_units"),
            num_classes=4,
            dropout_rate=getf("classifier.dropout_rate"),
            learning_rate=getf("classifier.learning_rate"),
            momentum=getf("classifier.momentum"),
            batch_size=geti("classifier.batch_size"),
            weight_init_scale=getf("classifier.weight_init_scale"),
        )
        engine = EngineParams(
            copies=geti("engine.copies"),
            rotation_range_degrees=getf("engine.rotation_range_degrees"),
            epochs_baseline=geti("engine.epochs_baseline"),
            epochs_per_round=geti("engine.epochs_per_round"),
            n_mc=geti("engine.n_mc"),
            retrain_from_scratch=_parse_bool(flat["engine.retrain_from_scratch"], "engine.retrain_from_scratch"),
        )
    except ParamError as exc:
        raise ConfigError(str(exc)) from None

    runs = geti("engine.runs")
    if runs < 1:
        raise ConfigError("field engine.runs: must be >= 1")
    workers = geti("workers")
    if workers < 1:
        raise ConfigError("field workers: must be >= 1")

    return ExperimentConfig(
        dataset_kind=dataset_kind,
        dataset_path=flat["dataset.path"],
        height=geti("dataset.height"),
        width=geti("dataset.width"),
        channels=geti("dataset.channels"),
        synthetic_classes=synthetic_classes,
        synthetic_preset=flat["synthetic.preset"],
        synthetic_n_per_class=geti("synthetic.n_per_class"),
        trials_mode=trials_mode,
        trials_count=geti("trials.count"),
        trials_file=flat["trials.file"],
        strategies=tuple(strategies),
        runs=runs,
        max_rounds=geti("engine.max_rounds"),
        engine=engine,
        classifier=classifier,
        output_dir=flat["output.dir"],
        master_seed=geti("seed"),
        workers=workers,
        flat=tuple(sorted(flat.items())),
    )


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    flat = parse_config_text(text)
    flat.update(overrides or {})
    return build_config(flat)


# ---- seeds and helpers ---------------------------------------------------------


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a label tuple."""
    material = "|".join([str(master_seed), *(str(p) for p in parts)])
    digest = hashlib.sha256(material.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def resolve_output_dir(path_str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def build_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset_kind == "files":
        return load_dataset(config.dataset_path, image_size=(config.height, config.width),
                            channels=config.channels)
    return generate_synthetic(
        config.synthetic_classes,
        n_per_class=config.synthetic_n_per_class,
        image_size=(config.height, config.width),
        seed=derive_seed(config.master_seed, "dataset"),
    )


def _load_trials_file(path, max_rounds) -> list:
    trials = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["trial_id", "reference", "comp1", "comp2", "comp3", "comp4"]
        if header is None or [h.strip() for h in header] != expected:
            raise ConfigError(f"trials file {path}: expected header {','.join(expected)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise ConfigError(f"trials file {path} line {line_no}: expected 6 fields")
            try:
                trials.append(
                    TrialSpec(
                        reference_fabric=row[1].strip(),
                        comparison_fabrics=tuple(c.strip() for c in row[2:6]),
                        max_rounds=max_rounds,
                        trial_id=row[0].strip(),
                    )
                )
            except ParamError as exc:
                raise ConfigError(f"trials file {path} line {line_no}: {exc}") from None
    if not trials:
        raise ConfigError(f"trials file {path}: no trials")
    return trials


def build_trials(config: ExperimentConfig, dataset: Dataset) -> list:
    rng = np.random.default_rng(derive_seed(config.master_seed, "trials"))
    if config.trials_mode == "sample":
        return sample_trials(dataset.fabric_ids, config.trials_count, rng, config.max_rounds)
    if config.trials_mode == "placement_suite":
        return placement_suite(dataset.fabric_ids, rng, config.max_rounds)
    return _load_trials_file(config.trials_file, config.max_rounds)


# ---- the experiment grid --------------------------------------------------------

_WORKER_STATE = {}


def _worker_init(dataset, classifier_config, engine):
    _WORKER_STATE["dataset"] = dataset
    _WORKER_STATE["classifier_config"] = classifier_config
    _WORKER_STATE["engine"] = engine


def _run_cell(args):
    spec, strategy_name, run_id, seed = args
    result = run_trial(
        spec,
        _WORKER_STATE["dataset"],
        StrategyKind.parse(strategy_name),
        _WORKER_STATE["classifier_config"],
        _WORKER_STATE["engine"],
        rng=np.random.default_rng(seed),
    )
    return (strategy_name, spec.trial_id, run_id), result


def _trial_rows(result: TrialResult, run_id: int):
    rows = []
    for rm in result.rounds:
        rows.append([
            result.spec.trial_id, run_id, result.strategy.value, rm.round_index,
            rm.predicted_platform, int(rm.correct), _fmt(rm.train_accuracy),
            _fmt(rm.mean_variance), _fmt(rm.mean_entropy), rm.touched_platform,
        ])
    return rows


def _cell_filename(strategy_name: str, trial_id: str, run_id: int) -> str:
    return f"{strategy_name.lower()}_{trial_id}_run{run_id}.csv"


def run_experiment(config: ExperimentConfig, out_dir=None, trials=None, cell_seeds=None):
    """Execute strategies x trials x runs and write the output tree.

    Returns {strategy_name: [TrialResult, ...]} with results ordered by
    (trial_id, run). Independent cells may execute in parallel; outputs are
    byte-identical for a given manifest regardless of worker count.
    """
    out = resolve_output_dir(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials").mkdir(exist_ok=True)
    (out / "summaries").mkdir(exist_ok=True)
    (out / "confusion").mkdir(exist_ok=True)

    dataset = build_dataset(config)
    if trials is None:
        trials = build_trials(config, dataset)

    strategy_names = [s.value for s in config.strategies]
    cells = []
    seeds = {}
    for strategy in strategy_names:
        for spec in trials:
            for run_id in range(config.runs):
                key = f"{strategy}|{spec.trial_id}|{run_id}"
                if cell_seeds is not None:
                    seed = int(cell_seeds[key])
                else:
                    seed = derive_seed(config.master_seed, "cell", strategy, spec.trial_id, run_id)
                seeds[key] = seed
                cells.append((spec, strategy, run_id, seed))

    manifest = {
        "version": __version__,
        "config": {k: v for k, v in config.flat},
        "trials": [
            {
                "trial_id": t.trial_id,
                "reference": t.reference_fabric,
                "comparisons": list(t.comparison_fabrics),
                "max_rounds": t.max_rounds,
            }
            for t in trials
        ],
        "cell_seeds": seeds,
        "timestamps": {"started": time.strftime("%Y-%m-%dT%H:%M:%S")},
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")

    results = {}
    try:
        if config.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(
                max_workers=config.workers,
                initializer=_worker_init,
                initargs=(dataset, config.classifier, config.engine),
            ) as pool:
                for key, result in pool.map(_run_cell, cells, chunksize=1):
                    results[key] = result
                    _flush_cell(out, key, result)
        else:
            _worker_init(dataset, config.classifier, config.engine)
            for args in cells:
                key, result = _run_cell(args)
                results[key] = result
                _flush_cell(out, key, result)
    except Exception as exc:
        _atomic_write(out / "FAILED.txt", f"{type(exc).__name__}: {exc}\n")
        raise

    by_strategy = {name: [] for name in strategy_names}
    for (strategy, trial_id, run_id), result in sorted(results.items(), key=lambda kv: kv[0]):
        by_strategy[strategy].append(result)

    index_rows = [("manifest", "manifest.json")]
    for strategy in strategy_names:
        ordered = sorted(
            ((key, res) for key, res in results.items() if key[0] == strategy),
            key=lambda kv: (kv[0][1], kv[0][2]),
        )
        for (name, trial_id, run_id), _ in ordered:
            index_rows.append(("trial", f"trials/{_cell_filename(name, trial_id, run_id)}"))
        strat_results = [res for _, res in ordered]
        stats = summarize(strat_results)
        for short, metric in SUMMARY_FILE_METRICS.items():
            rows = [[step, _fmt(mean), _fmt(std)] for step, mean, std in stats[metric]]
            path = out / "summaries" / f"{strategy.lower()}_{short}_summary.csv"
            _atomic_write(path, _csv_text(["step", "mean", "std"], rows))
            index_rows.append(("summary", f"summaries/{path.name}"))
        cm = confusion_matrix(strat_results)
        cm_rows = [[fabric, *cm.counts[i].tolist()] for i, fabric in enumerate(cm.fabrics)]
        path = out / "confusion" / f"{strategy.lower()}_confusion.csv"
        _atomic_write(path, _csv_text(["true\\predicted", *cm.fabrics], cm_rows))
        index_rows.append(("confusion", f"confusion/{path.name}"))

    manifest["timestamps"]["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    _atomic_write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    index_rows.append(("index", "index.csv"))
    _atomic_write(out / "index.csv", _csv_text(["kind", "path"], sorted(index_rows)))
    return by_strategy


def _flush_cell(out: Path, key, result: TrialResult) -> None:
    strategy, trial_id, run_id = key
    path = out / "trials" / _cell_filename(strategy, trial_id, run_id)
    _atomic_write(path, _csv_text(TRIAL_CSV_HEADER, _trial_rows(result, run_id)))


def rerun_from_manifest(manifest_path, out_dir):
    """Re-execute an experiment exactly as recorded in its manifest."""
    manifest = _load_manifest(Path(manifest_path))
    config = build_config(manifest["config"])
    trials = [
        TrialSpec(
            reference_fabric=t["reference"],
            comparison_fabrics=tuple(t["comparisons"]),
            max_rounds=int(t["max_rounds"]),
            trial_id=t["trial_id"],
        )
        for t in manifest["trials"]
    ]
    return run_experiment(config, out_dir=out_dir, trials=trials, cell_seeds=manifest["cell_seeds"])


# ---- ablation sweep --------------------------------------------------------------


def ablation_sweep(config: ExperimentConfig, axis: str, values: Sequence, out_dir=None):
    """Run the experiment once per setting of one ablation axis.

    axis 'dropout_rate' takes a list of rates; axis 'augmentation' takes
    booleans, where False means copies=1 with the raw image used directly.
    Emits per-setting output trees plus a final-accuracy comparison table.
    """
    out = resolve_output_dir(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if axis not in ("dropout_rate", "augmentation"):
        raise ConfigError(f"unknown ablation axis {axis!r}")
    if not values:
        raise ConfigError("ablation sweep needs at least one value")

    table = []
    for value in values:
        flat = dict(config.flat)
        if axis == "dropout_rate":
            rate = float(value)
            label = f"dr{rate:g}"
            flat["classifier.dropout_rate"] = repr(rate)
        else:
            on = value if isinstance(value, bool) else _parse_bool(str(value), "augmentation")
            label = "da_on" if on else "da_off"
            if not on:
                flat["engine.copies"] = "1"
                flat["engine.rotation_range_degrees"] = "0"
        flat["output.dir"] = str(out / label)
        setting_config = build_config(flat)
        results = run_experiment(setting_config, out_dir=out / label)
        for strategy_name, trial_results in results.items():
            finals = np.array([1.0 if r.final_correct else 0.0 for r in trial_results])
            std = float(finals.std(ddof=1)) if len(finals) > 1 else 0.0
            table.append([label, strategy_name, _fmt(finals.mean()), _fmt(std)])

    _atomic_write(
        out / "ablation_table.csv",
        _csv_text(["setting", "strategy", "mean_final_accuracy", "std_final_accuracy"], table),
    )
    return table


# ---- analysis over a results directory --------------------------------------------


def _load_manifest(path: Path) -> dict:
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ManifestError(f"manifest {path} does not exist")
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot parse manifest {path}: {exc}") from exc
    for field_name in ("config", "trials", "cell_seeds"):
        if field_name not in manifest:
            raise ManifestError(f"manifest {path} lacks field {field_name!r}")
    return manifest


def _load_trial_results(results_dir: Path, manifest: dict) -> dict:
    """Rebuild lightweight TrialResults from the emitted CSV files."""
    spec_by_id = {
        t["trial_id"]: TrialSpec(
            reference_fabric=t["reference"],
            comparison_fabrics=tuple(t["comparisons"]),
            max_rounds=int(t["max_rounds"]),
            trial_id=t["trial_id"],
        )
        for t in manifest["trials"]
    }
    loaded = {}
    for key in sorted(manifest["cell_seeds"]):
        strategy_name, trial_id, run_id = key.split("|")
        path = results_dir / "trials" / _cell_filename(strategy_name, trial_id, int(run_id))
        if not path.is_file():
            raise ManifestError(f"result file {path} listed in manifest is missing")
        spec = spec_by_id[trial_id]
        rounds = []
        touch_counts = np.ones(5, dtype=np.int64)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                touched = int(row["touched_platform"])
                if touched > 0:
                    touch_counts[touched] += 1
                rounds.append(
                    RoundMetrics(
                        round_index=int(row["round"]),
                        predicted_platform=int(row["predicted"]),
                        correct=bool(int(row["correct"])),
                        train_accuracy=float(row["train_acc"]),
                        mean_variance=float(row["mean_variance"]),
                        mean_entropy=float(row["mean_entropy"]),
                        touched_platform=touched,
                        mean_probs=None,
                    )
                )
        if not rounds:
            raise ManifestError(f"result file {path} has no rounds")
        strategy = StrategyKind.parse(strategy_name)
        if strategy is StrategyKind.YOTO:
            touch_counts = np.ones(5, dtype=np.int64)
        result = TrialResult(
            spec=spec,
            strategy=strategy,
            rounds=rounds,
            touches=[],
            touch_counts=touch_counts,
            final_platform=rounds[-1].predicted_platform,
            n_mc=0,
            training_pool_size=0,
            reuse_occurred=False,
        )
        loaded.setdefault(strategy_name, {})[(trial_id, int(run_id))] = result
    return loaded


def analyze(results_dir, human_log=None, out_dir=None) -> dict:
    """Cross-strategy and robot-vs-human behavioral analysis of a results tree.

    Writes a JS-distance matrix between strategies, most-touched-equals-
    prediction fractions, per-strategy confusion matrices and, when a human
    log is supplied, per-participant JS distances to every strategy.
    """
    results_dir = Path(results_dir)
    manifest = _load_manifest(results_dir)
    loaded = _load_trial_results(results_dir, manifest)
    out = Path(out_dir) if out_dir is not None else results_dir / "analysis"
    out.mkdir(parents=True, exist_ok=True)

    strategies = sorted(loaded)
    profiles = {
        s: {key: exploration_profile(res) for key, res in loaded[s].items()} for s in strategies
    }

    js_matrix = np.zeros((len(strategies), len(strategies)))
    for i, a in enumerate(strategies):
        for j, b in enumerate(strategies):
            common = sorted(set(profiles[a]) & set(profiles[b]))
            if not common:
                raise ManifestError(f"strategies {a} and {b} share no trials")
            js_matrix[i, j] = float(
                np.mean([js_distance(profiles[a][k].weights, profiles[b][k].weights) for k in common])
            )
    rows = [[a, *(_fmt(js_matrix[i, j]) for j in range(len(strategies)))] for i, a in enumerate(strategies)]
    _atomic_write(out / "js_matrix.csv", _csv_text(["strategy", *strategies], rows))

    mt_rows = []
    for s in strategies:
        ordered = [loaded[s][k] for k in sorted(loaded[s])]
        mt_rows.append([s, _fmt(most_touched_equals_prediction(ordered))])
    _atomic_write(out / "most_touched.csv", _csv_text(["strategy", "fraction"], mt_rows))

    for s in strategies:
        ordered = [loaded[s][k] for k in sorted(loaded[s])]
        cm = confusion_matrix(ordered)
        cm_rows = [[fabric, *cm.counts[i].tolist()] for i, fabric in enumerate(cm.fabrics)]
        _atomic_write(out / f"{s.lower()}_confusion.csv",
                      _csv_text(["true\\predicted", *cm.fabrics], cm_rows))

    summary = {
        "strategies": strategies,
        "js_matrix": js_matrix,
        "most_touched": {row[0]: float(row[1]) for row in mt_rows},
    }

    if human_log is not None:
        logs = load_human_logs(human_log)
        human_rows = []
        participants = sorted({log.participant_id for log in logs})
        for pid in participants:
            own = [log for log in logs if log.participant_id == pid]
            for s in strategies:
                dists = []
                for log in own:
                    keys = [k for k in profiles[s] if k[0] == log.trial_id]
                    human_profile = exploration_profile(log)
                    dists.extend(
                        js_distance(human_profile.weights, profiles[s][k].weights) for k in keys
                    )
                if dists:
                    human_rows.append([pid, s, _fmt(float(np.mean(dists)))])
        if not human_rows:
            raise ManifestError("human log shares no trial ids with the results")
        _atomic_write(out / "human_js.csv", _csv_text(["participant", "strategy", "mean_js"], human_rows))
        _atomic_write(
            out / "human_most_touched.csv",
            _csv_text(["fraction"], [[_fmt(most_touched_equals_prediction(logs))]]),
        )
        summary["human_js"] = human_rows
        summary["human_most_touched"] = most_touched_equals_prediction(logs)

    return summary


# ---- supervised classification mode ------------------------------------------------


@dataclass
class SupervisedResult:
    epochs: list
    train_accuracy: list
    val_accuracy: list

    @property
    def final_val_accuracy(self) -> float:
        return self.val_accuracy[-1]


def supervised_classification(
    dataset: Dataset,
    train_per_class: int = 10,
    val_per_class: int = 20,
    epochs: int = 20,
    seed: int = 0,
    classifier_config: Optional[ClassifierConfig] = None,
) -> SupervisedResult:
    """Plain train/val split classification over every fabric in a dataset.

    Uncertainty is not the point here, so the default classifier runs with
    dropout 0. Returns per-epoch train and validation accuracies.
    """
    rng = np.random.default_rng(seed)
    fabrics = dataset.fabric_ids
    h, w = dataset.image_shape[:2]
    channels = 1 if len(dataset.image_shape) == 2 else dataset.image_shape[2]
    if classifier_config is None:
        classifier_config = ClassifierConfig(
            height=h, width=w, channels=channels, num_classes=len(fabrics), dropout_rate=0.0
        )
    elif classifier_config.num_classes != len(fabrics):
        raise ParamError(
            f"classifier has {classifier_config.num_classes} classes, dataset has {len(fabrics)}"
        )

    train, val = [], []
    for label, fabric in enumerate(fabrics):
        images = dataset.images(fabric)
        need = train_per_class + val_per_class
        if len(images) < need:
            raise ParamError(f"fabric {fabric!r} has {len(images)} images, need {need}")
        order = rng.permutation(len(images))
        train.extend((images[i], label) for i in order[:train_per_class])
        val.extend((images[i], label) for i in order[train_per_class:need])

    clf = init_classifier(classifier_config, seed=int(rng.integers(2**63)))
    val_labels = np.array([lbl for _, lbl in val])
    train_labels = np.array([lbl for _, lbl in train])
    val_images = [im for im, _ in val]
    train_images = [im for im, _ in train]

    epoch_list, train_curve, val_curve = [], [], []
    for epoch in range(1, epochs + 1):
        train_epochs(clf, train, 1, rng)
        train_curve.append(float((predict_proba(clf, train_images).argmax(axis=1) == train_labels).mean()))
        val_curve.append(float((predict_proba(clf, val_images).argmax(axis=1) == val_labels).mean()))
        epoch_list.append(epoch)
    return SupervisedResult(epochs=epoch_list, train_accuracy=train_curve, val_accuracy=val_curve)
