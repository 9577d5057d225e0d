"""Command-line entry point: ``skelact <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import harness
from .augment import AugmentPolicy, augment_all, augment_dataset, eval_view
from .dataset_io import (
    DATASETS, KARD, MSR3D, SUBSETS, DataError, ProtocolSpec, make_split, parse_corpus,
    read_exclusion_list, subset_action_ids, write_sequence,
)
from .encoder import (
    MANIFEST_NAME, PartMap, default_part_map, encode, load_png, read_manifest, save_png,
    write_manifest,
)
from .nn.checkpoint import CheckpointError
from .nn.optim import DivergenceError
from .resnet import VALID_DEPTHS, ResNetConfig, ResNetModel, build
from .training import TrainConfig, evaluate, train

log = logging.getLogger("skelact")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

TRAIN_KEYS = ("epochs", "batch_size", "lr_schedule", "momentum", "weight_decay", "seed", "dtype")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# configuration


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def resolve(args):
    """Merge the config file with command-line flags (flags win)."""
    cfg = load_config(getattr(args, "config", None))
    for key in ("dataset", "subset", "experiment", "depth", "seed", "out", "data_root",
                "part_map", "exclude", "epochs", "batch_size", "repeats", "images", "checkpoint"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if "dataset" in cfg:
        cfg["dataset"] = _dataset(cfg["dataset"])
    return cfg


def _dataset(name):
    lookup = {d.lower(): d for d in DATASETS}
    try:
        return lookup[str(name).lower()]
    except KeyError:
        raise UsageError(f"unknown dataset {name!r}; expected msr3d or kard") from None


def train_config_from(cfg):
    kwargs = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    if "augment" in cfg:
        kwargs["augment_policy"] = AugmentPolicy(**cfg["augment"])
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training configuration: {exc}") from None


def model_config_from(cfg, depth, num_classes=8, seed=0):
    try:
        return ResNetConfig(int(depth), num_classes, tuple(cfg.get("stage_widths", (16, 32, 64))), seed)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model configuration: {exc}") from None


def part_map_from(cfg, dataset):
    if cfg.get("part_map"):
        return PartMap.from_file(cfg["part_map"])
    return default_part_map(dataset)


def protocol_from(cfg, dataset, subset, experiment=None):
    if dataset == MSR3D:
        if experiment:
            raise UsageError("--experiment applies to KARD only")
        return ProtocolSpec.msr3d(subset, cfg.get("train_subjects", (1, 3, 5, 7, 9)))
    if not experiment:
        raise UsageError("KARD protocols need --experiment A, B or C")
    return ProtocolSpec.kard(subset, experiment, cfg.get("repeats", 10), cfg.get("split_seed", 0))


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _corpus(cfg):
    exclude = read_exclusion_list(cfg["exclude"]) if cfg.get("exclude") else ()
    corpus = parse_corpus(cfg["data_root"], cfg["dataset"], exclude=exclude)
    log.info(
        "parsed %d sequences (%d invalid, %d excluded, %d diagnostics)",
        len(corpus), len(corpus.invalid), len(corpus.excluded), len(corpus.diagnostics),
    )
    return corpus


# --------------------------------------------------------------------------
# subcommands


def cmd_encode(args):
    cfg = resolve(args)
    _require(cfg, "data_root", "dataset", "out")
    corpus = _corpus(cfg)
    pm = part_map_from(cfg, cfg["dataset"])
    roles = {seq.key: "all" for seq in corpus}
    if cfg.get("subset"):
        proto = protocol_from(cfg, cfg["dataset"], cfg["subset"], cfg.get("experiment"))
        splits = make_split(corpus, proto)
        split = splits[args.repeat]
        roles = {k: "train" for k in split.train_ids} | {k: "test" for k in split.test_ids}
    out = cfg["out"]
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    if args.canonical:
        os.makedirs(os.path.join(out, "sequences"), exist_ok=True)
    rows = []
    for seq in corpus:
        if seq.key not in roles:
            continue
        rel = os.path.join("images", f"{seq.name}.png")
        save_png(os.path.join(out, rel), encode(seq, pm))
        if args.canonical:
            write_sequence(os.path.join(out, "sequences", f"{seq.name}.txt"), seq)
        rows.append((rel, seq.action_id, seq.subject_id, seq.episode_id, roles[seq.key]))
    write_manifest(os.path.join(out, MANIFEST_NAME), rows)
    print(f"encoded {len(rows)} sequences into {out}")
    return EXIT_OK


def cmd_augment(args):
    cfg = resolve(args)
    _require(cfg, "images", "out")
    policy = AugmentPolicy(**cfg.get("augment", {}))
    src = cfg["images"]
    out = cfg["out"]
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    rows = []
    for i, row in enumerate(read_manifest(os.path.join(src, MANIFEST_NAME))):
        img = load_png(os.path.join(src, row["image_path"]))
        stem = os.path.splitext(os.path.basename(row["image_path"]))[0]
        if row["split_role"] == "test":
            variants, names = [eval_view(img)], ["center"]
        else:
            variants, names = augment_all(img, policy, with_names=True, index=i)
        for v, name in zip(variants, names):
            rel = os.path.join("images", f"{stem}.{name}.png")
            save_png(os.path.join(out, rel), v)
            rows.append((rel, row["action"], row["subject"], row["episode"], row["split_role"], name))
    write_manifest(os.path.join(out, MANIFEST_NAME), rows)
    print(f"wrote {len(rows)} images into {out}")
    return EXIT_OK


def _class_ids(cfg, rows):
    if cfg.get("subset"):
        return subset_action_ids(cfg["dataset"], cfg["subset"])
    return sorted({r["action"] for r in rows})


def _load_images(src, rows, view):
    images = []
    for row in rows:
        img = load_png(os.path.join(src, row["image_path"]))
        images.append(view(img) if img.shape[0] != 32 else img)
    return np.stack(images)


def cmd_train(args):
    cfg = resolve(args)
    _require(cfg, "images", "out")
    if cfg.get("subset"):
        _require(cfg, "dataset")
    tc = train_config_from(cfg)
    src = cfg["images"]
    rows = read_manifest(os.path.join(src, MANIFEST_NAME))
    train_rows = [r for r in rows if r["split_role"] in ("train", "all")]
    if not train_rows:
        raise DataError(f"no training rows in {src}")
    class_ids = _class_ids(cfg, rows)
    class_of = {a: i for i, a in enumerate(class_ids)}
    train_rows = [r for r in train_rows if r["action"] in class_of]
    y_rows = np.array([class_of[r["action"]] for r in train_rows])
    if "variant" in train_rows[0]:
        x = _load_images(src, train_rows, eval_view)
        y = y_rows
    else:
        src_imgs = np.stack([load_png(os.path.join(src, r["image_path"])) for r in train_rows])
        x, y = augment_dataset(src_imgs, y_rows, tc.augment_policy)
    model = build(model_config_from(cfg, cfg.get("depth", 20), len(class_ids), tc.seed), dtype=tc.dtype)
    history = train(model, x, y, tc)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, "model.ckpt")
    model.save(ckpt, extra={"classes": class_ids})
    with open(os.path.join(out, "train_curve.json"), "w") as fh:
        json.dump(history.epochs, fh, indent=2, sort_keys=True)
    print(f"trained ResNet-{model.config.depth} on {len(x)} images; checkpoint {ckpt}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg = resolve(args)
    _require(cfg, "images", "checkpoint")
    model = ResNetModel.load(cfg["checkpoint"])
    class_ids = model.extra.get("classes") or list(range(model.config.num_classes))
    class_of = {a: i for i, a in enumerate(class_ids)}
    src = cfg["images"]
    rows = read_manifest(os.path.join(src, MANIFEST_NAME))
    test_rows = [r for r in rows if r["split_role"] == "test"] or rows
    test_rows = [r for r in test_rows if r["action"] in class_of]
    if not test_rows:
        raise DataError(f"no evaluable rows in {src}")
    x = _load_images(src, test_rows, eval_view)
    y = np.array([class_of[r["action"]] for r in test_rows])
    res = evaluate(model, x, y)
    summary = {"accuracy": res.accuracy, "confusion_matrix": res.confusion.tolist(), "classes": class_ids}
    if cfg.get("out"):
        os.makedirs(cfg["out"], exist_ok=True)
        with open(os.path.join(cfg["out"], "evaluation.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"accuracy {harness.fmt_pct(res.accuracy)}% on {len(y)} samples")
    return EXIT_OK


def cmd_protocol(args):
    cfg = resolve(args)
    _require(cfg, "data_root", "dataset", "out")
    dataset = cfg["dataset"]
    tc = train_config_from(cfg)
    pm = part_map_from(cfg, dataset)
    corpus = _corpus(cfg)
    subsets = [cfg["subset"]] if cfg.get("subset") else list(SUBSETS[dataset])
    if dataset == KARD:
        exps = [cfg["experiment"]] if cfg.get("experiment") else ["A", "B", "C"]
        protos = [protocol_from(cfg, dataset, s, e) for s in subsets for e in exps]
    else:
        protos = [protocol_from(cfg, dataset, s, cfg.get("experiment")) for s in subsets]
    depths = cfg.get("depths") or [cfg.get("depth", 20)]
    results = []
    for proto in protos:
        for depth in depths:
            mc = model_config_from(cfg, depth)
            r = harness.run_protocol(corpus, proto, mc, tc, out_dir=cfg["out"], part_map=pm)
            print(f"{r.key}: mean accuracy {harness.fmt_pct(r.mean_accuracy)}%")
            results.append(r)
    all_results = harness.read_results(os.path.join(cfg["out"], "results.json"))
    harness.report(all_results, cfg["out"])
    return EXIT_OK


def cmd_report(args):
    results = []
    for path in args.results:
        results = harness.merge_results(results, harness.read_results(path))
    out = args.out or os.path.dirname(os.path.abspath(args.results[0]))
    paths = harness.report(results, out)
    print(open(paths["comparison"]).read())
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", type=str.lower, choices=["msr3d", "kard"])
    common.add_argument("--subset", help="AS1/AS2/AS3 or ActivitySet1/2/3")
    common.add_argument("--experiment", choices=["A", "B", "C"])
    common.add_argument("--depth", type=int, choices=VALID_DEPTHS)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="skelact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", parents=[common], help="skeleton corpus -> 40x40 PNG images")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--exclude", help="file of sequence names to drop")
    p.add_argument("--part-map", dest="part_map")
    p.add_argument("--repeat", type=int, default=0, help="which random split to label (KARD)")
    p.add_argument("--canonical", action="store_true", help="also write canonical sequence files")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("augment", parents=[common], help="expand encoded training images")
    p.add_argument("--images", required=True, help="directory written by 'encode'")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="train a network on an image directory")
    p.add_argument("--images", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--images", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("protocol", parents=[common], help="run a full evaluation protocol")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--exclude")
    p.add_argument("--part-map", dest="part_map")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--repeats", type=int, help="random repeats per KARD experiment")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("report", parents=[common], help="comparison tables from results files")
    p.add_argument("results", nargs="+", help="results.json file(s)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"skelact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"skelact: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"skelact: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
