"""End-to-end protocol runs, results files and comparison reports."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from . import baselines
from .augment import augment_dataset, eval_view
from .dataset_io import KARD, MSR3D, SUBSETS, ProtocolSpec, make_split, subset_action_ids
from .encoder import default_part_map, encode
from .nn.checkpoint import atomic_write_bytes
from .resnet import ResNetConfig, build
from .training import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

RESULTS_FORMAT = "skelact-results/1"


class LeakageError(AssertionError):
    pass


@dataclass
class ExperimentResult:
    protocol: ProtocolSpec
    model_depth: int
    seed: int
    class_names: list
    per_split_accuracy: list = field(default_factory=list)
    per_split_confusion: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    @property
    def mean_accuracy(self):
        if not self.per_split_accuracy:
            return float("nan")
        return float(np.mean(self.per_split_accuracy))

    @property
    def confusion_matrix(self):
        k = len(self.class_names)
        total = np.zeros((k, k), dtype=np.int64)
        for cm in self.per_split_confusion:
            total += np.asarray(cm, dtype=np.int64)
        return total

    @property
    def key(self):
        return f"{self.protocol.label}-d{self.model_depth}-s{self.seed}"

    def to_record(self):
        return {
            "key": self.key,
            "protocol": self.protocol.to_dict(),
            "depth": self.model_depth,
            "seed": self.seed,
            "class_names": list(self.class_names),
            "per_split_accuracy": [float(a) for a in self.per_split_accuracy],
            "mean_accuracy": self.mean_accuracy if self.per_split_accuracy else None,
            "confusion_matrix": self.confusion_matrix.tolist(),
            "per_split_confusion": [np.asarray(c).tolist() for c in self.per_split_confusion],
            "curves": self.curves,
            "checkpoints": list(self.checkpoints),
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_record(cls, rec):
        p = rec["protocol"]
        proto = ProtocolSpec(
            p["dataset"], p["subset"], experiment=p.get("experiment"),
            split_rule=p.get("split_rule", "CrossSubject"),
            train_fraction=None if p.get("train_fraction") is None else Fraction(p["train_fraction"]),
            repeats=p.get("repeats", 1), seed=p.get("seed", 0),
            train_subjects=tuple(p.get("train_subjects", (1, 3, 5, 7, 9))),
        )
        return cls(
            protocol=proto,
            model_depth=rec["depth"],
            seed=rec.get("seed", 0),
            class_names=rec.get("class_names", []),
            per_split_accuracy=list(rec.get("per_split_accuracy", [])),
            per_split_confusion=[np.asarray(c) for c in rec.get("per_split_confusion", [])],
            curves=rec.get("curves", []),
            checkpoints=rec.get("checkpoints", []),
            status=rec.get("status", "ok"),
            error=rec.get("error"),
        )


# --------------------------------------------------------------------------
# results files


def dumps_results(results):
    payload = {"format": RESULTS_FORMAT, "results": [r.to_record() for r in results]}
    return (json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def write_results(path, results):
    atomic_write_bytes(path, dumps_results(results))


def read_results(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != RESULTS_FORMAT:
        raise ValueError(f"{path} is not a skelact results file")
    return [ExperimentResult.from_record(r) for r in payload["results"]]


def merge_results(existing, new):
    """Replace records with the same key, keep order of first appearance."""
    by_key = {r.key: r for r in existing}
    order = [r.key for r in existing]
    for r in new:
        if r.key not in by_key:
            order.append(r.key)
        by_key[r.key] = r
    return [by_key[k] for k in order]


# --------------------------------------------------------------------------
# protocol runs


def run_protocol(corpus, proto, model_config, train_config=None, out_dir=None,
                 part_map=None, track_test=True):
    """Train and evaluate a fresh model on every split of ``proto``.

    ``model_config`` is a :class:`ResNetConfig` or a depth. Checkpoints and
    the results file go to ``out_dir`` when given; if a split fails, the
    results gathered so far are written with status ``failed`` and the
    exception propagates.
    """
    train_config = train_config or TrainConfig()
    depth = model_config.depth if isinstance(model_config, ResNetConfig) else int(model_config)
    widths = model_config.stage_widths if isinstance(model_config, ResNetConfig) else (16, 32, 64)
    part_map = part_map or default_part_map(proto.dataset_id)

    action_ids = subset_action_ids(proto.dataset_id, proto.subset_name)
    class_of = {aid: i for i, aid in enumerate(action_ids)}
    result = ExperimentResult(
        protocol=proto,
        model_depth=depth,
        seed=train_config.seed,
        class_names=list(SUBSETS[proto.dataset_id][proto.subset_name]),
    )
    splits = make_split(corpus, proto)
    by_key = {seq.key: seq for seq in corpus}
    images = {}

    def encoded(key):
        if key not in images:
            images[key] = encode(by_key[key], part_map)
        return images[key]

    started = time.perf_counter()
    try:
        for i, split in enumerate(splits):
            train_keys = sorted(split.train_ids)
            test_keys = sorted(split.test_ids)
            if set(train_keys) & set(test_keys):
                raise LeakageError(f"split {i}: sequences on both sides")

            x_src = np.stack([encoded(k) for k in train_keys])
            y_src = np.array([class_of[k[1]] for k in train_keys])
            x_train, y_train, groups = augment_dataset(
                x_src, y_src, train_config.augment_policy, groups=np.arange(len(train_keys))
            )
            x_test = np.stack([eval_view(encoded(k)) for k in test_keys])
            y_test = np.array([class_of[k[1]] for k in test_keys])
            seen_train = {train_keys[g] for g in np.unique(groups)}
            if seen_train & set(test_keys):
                raise LeakageError(f"split {i}: test sequence reached training")

            model = build(
                ResNetConfig(depth, len(action_ids), widths, seed=train_config.seed + i),
                dtype=train_config.dtype,
            )
            log.info("%s split %d: %d train images, %d test", proto.label, i, len(x_train), len(x_test))
            history = train(
                model, x_train, y_train, train_config,
                test=(x_test, y_test) if track_test else None,
            )
            ev = evaluate(model, x_test, y_test)
            result.per_split_accuracy.append(ev.accuracy)
            result.per_split_confusion.append(ev.confusion)
            result.curves.append(history.epochs)
            if out_dir is not None:
                ckpt = os.path.join("checkpoints", f"{result.key}-split{i}.ckpt")
                model.save(os.path.join(out_dir, ckpt), extra={"classes": action_ids})
                result.checkpoints.append(ckpt)
            log.info("%s split %d: accuracy %.2f", proto.label, i, ev.accuracy)
    except Exception as exc:
        result.status = "failed"
        result.error = f"{type(exc).__name__}: {exc}"
        if out_dir is not None:
            _persist(out_dir, result, time.perf_counter() - started)
        raise
    if out_dir is not None:
        _persist(out_dir, result, time.perf_counter() - started)
    return result


def _persist(out_dir, result, runtime):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "results.json")
    existing = read_results(path) if os.path.exists(path) else []
    write_results(path, merge_results(existing, [result]))
    # wall-clock time varies run to run, so it lives outside results.json
    tpath = os.path.join(out_dir, "runtime.json")
    timings = {}
    if os.path.exists(tpath):
        with open(tpath) as fh:
            timings = json.load(fh)
    timings[result.key] = runtime
    atomic_write_bytes(tpath, (json.dumps(timings, indent=2, sort_keys=True) + "\n").encode())


# --------------------------------------------------------------------------
# reporting


def fmt_pct(value):
    """Percent with two decimals, rounding half up."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "-"
    return str(Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def fmt_delta(value):
    if value is None:
        return "-"
    s = fmt_pct(value)
    return s if s.startswith("-") else "+" + s


def _table(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]

    def line(r):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(r, widths)) + " |"

    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep] + [line(r) for r in rows])


def _obtained_msr3d(results, depth):
    vals = {}
    for r in results:
        if r.protocol.dataset_id == MSR3D and r.model_depth == depth and r.per_split_accuracy:
            vals[r.protocol.subset_name] = r.mean_accuracy
    row = [vals.get(s) for s in ("AS1", "AS2", "AS3")]
    avg = float(np.mean(row)) if all(v is not None for v in row) else None
    return row + [avg]


def _obtained_kard(results, depth, subset=None):
    """Per-experiment accuracy; averaged over activity sets when ``subset`` is None."""
    row = []
    for exp in ("A", "B", "C"):
        vals = [
            r.mean_accuracy for r in results
            if r.protocol.dataset_id == KARD and r.model_depth == depth
            and r.protocol.experiment == exp and r.per_split_accuracy
            and (subset is None or r.protocol.subset_name == subset)
        ]
        row.append(float(np.mean(vals)) if vals else None)
    return row


def _delta(obtained, reference):
    return [None if o is None else o - ref for o, ref in zip(obtained, reference)]


def comparison_text(results):
    """Markdown tables juxtaposing obtained accuracies with the published ones."""
    out = []
    depths = sorted({r.model_depth for r in results})
    if any(r.protocol.dataset_id == MSR3D for r in results):
        out.append("## MSR Action 3D: comparison with other approaches\n")
        rows = [[name] + [fmt_pct(v) for v in vals] for name, vals in baselines.MSR3D_METHODS]
        best = baselines.method_row(baselines.MSR3D_METHODS, baselines.BEST_MODEL)
        for d in depths:
            got = _obtained_msr3d(results, d)
            rows.append([f"This run (ResNet-{d})"] + [fmt_pct(v) for v in got])
            rows.append([f"  delta vs {baselines.BEST_MODEL}"] + [fmt_delta(v) for v in _delta(got, best)])
        out.append(_table(["Method", "AS1", "AS2", "AS3", "Aver."], rows))
        out.append("\n## MSR Action 3D: per-depth comparison\n")
        rows = []
        for d in depths:
            ref = baselines.MSR3D_MODELS.get(d)
            got = _obtained_msr3d(results, d)
            rows.append([f"ResNet-{d} (published)"] + [fmt_pct(v) for v in ref])
            rows.append([f"ResNet-{d} (this run)"] + [fmt_pct(v) for v in got])
            rows.append(["  delta"] + [fmt_delta(v) for v in _delta(got, ref)])
        out.append(_table(["Model", "AS1", "AS2", "AS3", "Aver."], rows))
    if any(r.protocol.dataset_id == KARD for r in results):
        out.append("\n## KARD: comparison with other approaches (mean over activity sets)\n")
        rows = [[name] + [fmt_pct(v) for v in vals] for name, vals in baselines.KARD_METHODS]
        best = baselines.method_row(baselines.KARD_METHODS, baselines.BEST_MODEL)
        for d in depths:
            got = _obtained_kard(results, d)
            rows.append([f"This run (ResNet-{d})"] + [fmt_pct(v) for v in got])
            rows.append([f"  delta vs {baselines.BEST_MODEL}"] + [fmt_delta(v) for v in _delta(got, best)])
        out.append(_table(["Method", "Exp. A", "Exp. B", "Exp. C"], rows))
        for subset in SUBSETS[KARD]:
            if not any(r.protocol.dataset_id == KARD and r.protocol.subset_name == subset for r in results):
                continue
            out.append(f"\n## KARD {subset}: per-depth comparison\n")
            rows = []
            for d in depths:
                ref = baselines.KARD_MODELS[subset].get(d)
                got = _obtained_kard(results, d, subset)
                rows.append([f"ResNet-{d} (published)"] + [fmt_pct(v) for v in ref])
                rows.append([f"ResNet-{d} (this run)"] + [fmt_pct(v) for v in got])
                rows.append(["  delta"] + [fmt_delta(v) for v in _delta(got, ref)])
            out.append(_table(["Model", "Exp. A", "Exp. B", "Exp. C"], rows))
    return "\n".join(out) + "\n"


def confusion_csv(result):
    names = result.class_names
    lines = ["true\\pred," + ",".join(f'"{n}"' for n in names)]
    for name, row in zip(names, result.confusion_matrix):
        lines.append(f'"{name}",' + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def curves_csv(result):
    lines = ["split,epoch,lr,loss,train_error,test_error"]
    for i, epochs in enumerate(result.curves):
        for e in epochs:
            test = e.get("test_error")
            lines.append(
                f"{i},{e['epoch']},{e['lr']!r},{e['loss']!r},{e['train_error']!r},"
                f"{'' if test is None else repr(test)}"
            )
    return "\n".join(lines) + "\n"


def report(results, out_dir):
    """Write results.json, per-result confusion/curve CSVs and comparison.md.

    Returns a dict of the written paths.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    paths = {"results": os.path.join(out_dir, "results.json"), "confusion": [], "curves": []}
    try:
        os.makedirs(out_dir, exist_ok=True)
        write_results(paths["results"], results)
        for r in results:
            p = os.path.join(out_dir, f"confusion-{r.key}.csv")
            atomic_write_bytes(p, confusion_csv(r).encode())
            paths["confusion"].append(p)
            if r.curves:
                p = os.path.join(out_dir, f"curves-{r.key}.csv")
                atomic_write_bytes(p, curves_csv(r).encode())
                paths["curves"].append(p)
        paths["comparison"] = os.path.join(out_dir, "comparison.md")
        atomic_write_bytes(paths["comparison"], comparison_text(results).encode())
    except OSError as exc:
        raise OSError(f"cannot write report to {exc.filename or out_dir}: {exc.strerror}") from exc
    return paths

