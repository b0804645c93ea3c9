"""Command-line entry point.

Subcommands: ``dataset gen``, ``dataset inspect``, ``run``, ``sweep``,
``analyze``. Every configuration key can be overridden one-for-one with
``--set key=value``. Exit codes: 0 success, 1 configuration error, 2 data
error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigError,
    DatasetEmpty,
    DecodeError,
    FabricEmpty,
    LogParseError,
    ManifestError,
    NumericalDivergence,
    ParamError,
    TexrecError,
    UnknownFabric,
)

_CONFIG_ERRORS = (ConfigError, ParamError)
_DATA_ERRORS = (DatasetEmpty, DecodeError, FabricEmpty, UnknownFabric, ManifestError, LogParseError)


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load(args):
    from .harness import build_config, load_config

    overrides = _parse_overrides(args.set)
    if getattr(args, "out", None):
        overrides["output.dir"] = args.out
    if args.config:
        return load_config(args.config, overrides)
    return build_config(overrides)


def _cmd_dataset_gen(args):
    from .dataset import save_dataset
    from .harness import build_dataset

    config = _load(args)
    dataset = build_dataset(config)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} images, {len(dataset.fabric_ids)} fabrics -> {args.out}")
    return 0


def _cmd_dataset_inspect(args):
    from .dataset import load_dataset

    dataset = load_dataset(args.path)
    shape = "x".join(str(d) for d in dataset.image_shape)
    print(f"root: {args.path}")
    print(f"fabrics: {len(dataset.fabric_ids)}  images: {len(dataset)}  shape: {shape}")
    for fabric, count in dataset.counts().items():
        print(f"  {fabric}: {count}")
    return 0


def _cmd_run(args):
    from .harness import rerun_from_manifest, run_experiment

    if args.manifest:
        if not args.out:
            raise ConfigError("run --manifest requires --out for the new output directory")
        rerun_from_manifest(args.manifest, args.out)
        print(f"re-ran manifest {args.manifest} -> {args.out}")
        return 0
    config = _load(args)
    run_experiment(config)
    from .harness import resolve_output_dir

    print(f"experiment complete -> {resolve_output_dir(config.output_dir)}")
    return 0


def _cmd_sweep(args):
    from .harness import ablation_sweep

    config = _load(args)
    if args.axis == "dropout_rate":
        values = [float(v) for v in args.values.split(",")]
    else:
        values = [v.strip().lower() in ("1", "true", "on", "yes") for v in args.values.split(",")]
    table = ablation_sweep(config, args.axis, values)
    for setting, strategy, mean, std in table:
        print(f"{setting:10s} {strategy:10s} final accuracy {float(mean):.3f} +- {float(std):.3f}")
    return 0


def _cmd_analyze(args):
    from .harness import analyze

    summary = analyze(args.results_dir, human_log=args.human_log)
    strategies = summary["strategies"]
    print("JS distance matrix:")
    print("  " + "  ".join(f"{s:>10s}" for s in strategies))
    for i, s in enumerate(strategies):
        row = "  ".join(f"{summary['js_matrix'][i, j]:10.4f}" for j in range(len(strategies)))
        print(f"  {s:>10s} {row}")
    for s, frac in summary["most_touched"].items():
        print(f"most-touched == prediction [{s}]: {frac:.3f}")
    if "human_most_touched" in summary:
        print(f"most-touched == prediction [humans]: {summary['human_most_touched']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="texrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen", help="generate a synthetic dataset on disk")
    gen.add_argument("--config", default=None, help="config file")
    gen.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.set_defaults(func=_cmd_dataset_gen)
    ins = ds_sub.add_parser("inspect", help="describe a dataset directory")
    ins.add_argument("path")
    ins.set_defaults(func=_cmd_dataset_inspect)

    run = sub.add_parser("run", help="run a full experiment grid")
    run.add_argument("--config", default=None)
    run.add_argument("--set", action="append", metavar="KEY=VALUE")
    run.add_argument("--manifest", default=None, help="re-run an existing manifest bit-identically")
    run.add_argument("--out", default=None, help="output directory override")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="ablation sweep over one axis")
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--axis", required=True, choices=["dropout_rate", "augmentation"])
    sweep.add_argument("--values", required=True, help="comma-separated setting values")
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(func=_cmd_sweep)

    an = sub.add_parser("analyze", help="behavioral analysis of a results directory")
    an.add_argument("results_dir")
    an.add_argument("--human-log", default=None, help="human study CSV to compare against")
    an.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TexrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
