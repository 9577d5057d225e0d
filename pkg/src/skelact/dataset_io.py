"""Skeleton corpora: file parsing, validity filtering and train/test protocols."""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

log = logging.getLogger(__name__)

MSR3D = "MSR3D"
KARD = "KARD"
DATASETS = (MSR3D, KARD)


class DataError(ValueError):
    """Bad or missing input data (maps to CLI exit code 2)."""


# --------------------------------------------------------------------------
# action vocabularies and protocol tables

# MSR Action 3D action ids a01..a20.
MSR3D_ACTIONS = {
    1: "High arm wave",
    2: "Horizontal arm wave",
    3: "Hammer",
    4: "Hand catch",
    5: "Forward punch",
    6: "High throw",
    7: "Draw x",
    8: "Draw tick",
    9: "Draw circle",
    10: "Hand clap",
    11: "Two hand wave",
    12: "Side-boxing",
    13: "Bend",
    14: "Forward kick",
    15: "Side kick",
    16: "Jogging",
    17: "Tennis swing",
    18: "Tennis serve",
    19: "Golf swing",
    20: "Pickup & Throw",
}

# KARD action ids a01..a18.
KARD_ACTIONS = {
    1: "Horizontal arm wave",
    2: "High arm wave",
    3: "Two-hand wave",
    4: "Catch cap",
    5: "High throw",
    6: "Draw X",
    7: "Draw tick",
    8: "Toss paper",
    9: "Forward kick",
    10: "Side kick",
    11: "Take umbrella",
    12: "Bend",
    13: "Hand clap",
    14: "Walk",
    15: "Phone call",
    16: "Drink",
    17: "Sit down",
    18: "Stand up",
}

# Subset columns exactly as published, top to bottom.
MSR3D_SUBSETS = {
    "AS1": [
        "Horizontal arm wave", "Hammer", "Forward punch", "High throw",
        "Hand clap", "Bend", "Tennis serve", "Pickup & Throw",
    ],
    "AS2": [
        "High arm wave", "Hand catch", "Draw x", "Draw tick",
        "Draw circle", "Two hand wave", "Forward kick", "Side-boxing",
    ],
    "AS3": [
        "High throw", "Forward kick", "Side kick", "Jogging",
        "Tennis swing", "Tennis serve", "Golf swing", "Pickup & Throw",
    ],
}

KARD_SUBSETS = {
    "ActivitySet1": [
        "Horizontal arm wave", "Two-hand wave", "Bend", "Phone call",
        "Stand up", "Forward kick", "Draw X", "Walk",
    ],
    "ActivitySet2": [
        "High arm wave", "Side kick", "Catch cap", "Draw tick",
        "Hand clap", "Forward kick", "Bend", "Sit down",
    ],
    "ActivitySet3": [
        "Draw tick", "Drink", "Sit down", "Phone call",
        "Take umbrella", "Toss paper", "High throw", "Horiz. arm wave",
    ],
}

SUBSETS = {MSR3D: MSR3D_SUBSETS, KARD: KARD_SUBSETS}
ACTIONS = {MSR3D: MSR3D_ACTIONS, KARD: KARD_ACTIONS}

EXPERIMENT_FRACTIONS = {"A": Fraction(1, 3), "B": Fraction(2, 3), "C": Fraction(1, 2)}

DEFAULT_JOINTS = {MSR3D: 20, KARD: 15}
DEFAULT_TRAIN_SUBJECTS = (1, 3, 5, 7, 9)


def _canon(name):
    name = name.lower().replace("horiz.", "horizontal")
    return re.sub(r"[^a-z0-9]+", "", name)


def action_id(dataset, name):
    """Resolve a table label such as ``"Horiz. arm wave"`` to its numeric id."""
    key = _canon(name)
    for aid, label in ACTIONS[dataset].items():
        if _canon(label) == key:
            return aid
    raise KeyError(f"unknown {dataset} action {name!r}")


def subset_action_ids(dataset, subset):
    try:
        names = SUBSETS[dataset][subset]
    except KeyError:
        raise DataError(
            f"unknown subset {subset!r} for {dataset}; expected one of {sorted(SUBSETS[dataset])}"
        ) from None
    return [action_id(dataset, n) for n in names]


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """One recorded action: ``coords`` has shape (N frames, K joints, 3)."""

    coords: np.ndarray
    action_id: int
    subject_id: int
    episode_id: int
    dataset_id: str
    confidence: np.ndarray | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 3:
            raise DataError(f"coords must have shape (N, K, 3), got {coords.shape}")
        if coords.shape[0] < 1 or coords.shape[1] < 1:
            raise DataError("a sequence needs at least one frame and one joint")
        if not np.all(np.isfinite(coords)):
            raise DataError(f"non-finite coordinate in sequence {self.key}")
        if self.dataset_id not in DATASETS:
            raise DataError(f"unknown dataset {self.dataset_id!r}")
        if not 1 <= self.subject_id <= 10:
            raise DataError(f"subject id must lie in 1..10, got {self.subject_id}")
        if self.episode_id < 1:
            raise DataError(f"episode id must be >= 1, got {self.episode_id}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def num_frames(self):
        return self.coords.shape[0]

    @property
    def num_joints(self):
        return self.coords.shape[1]

    @property
    def key(self):
        return (self.dataset_id, self.action_id, self.subject_id, self.episode_id)

    @property
    def name(self):
        return f"a{self.action_id:02d}_s{self.subject_id:02d}_e{self.episode_id:02d}"

    def with_coords(self, coords):
        return SkeletonSequence(
            coords, self.action_id, self.subject_id, self.episode_id, self.dataset_id
        )


@dataclass(frozen=True)
class ProtocolSpec:
    dataset_id: str
    subset_name: str
    experiment: str | None = None
    split_rule: str = "CrossSubject"
    train_fraction: Fraction | None = None
    repeats: int = 1
    seed: int = 0
    train_subjects: tuple = DEFAULT_TRAIN_SUBJECTS

    def __post_init__(self):
        if self.dataset_id not in DATASETS:
            raise DataError(f"unknown dataset {self.dataset_id!r}")
        if self.subset_name not in SUBSETS[self.dataset_id]:
            raise DataError(
                f"unknown subset {self.subset_name!r} for {self.dataset_id}; "
                f"expected one of {sorted(SUBSETS[self.dataset_id])}"
            )
        if self.split_rule not in ("CrossSubject", "FractionalRandom"):
            raise DataError(f"unknown split rule {self.split_rule!r}")
        if self.experiment is not None:
            if self.dataset_id != KARD:
                raise DataError("experiments A/B/C apply to KARD only")
            if self.experiment not in EXPERIMENT_FRACTIONS:
                raise DataError(f"experiment must be A, B or C, got {self.experiment!r}")
            expected = EXPERIMENT_FRACTIONS[self.experiment]
            if self.train_fraction is None:
                object.__setattr__(self, "train_fraction", expected)
            elif Fraction(self.train_fraction).limit_denominator(1000) != expected:
                raise DataError(
                    f"experiment {self.experiment} requires train fraction {expected}, "
                    f"got {self.train_fraction}"
                )
        if self.split_rule == "FractionalRandom":
            if self.train_fraction is None:
                raise DataError("FractionalRandom split needs a train fraction")
            if not 0 < self.train_fraction < 1:
                raise DataError(
                    f"train fraction must lie strictly between 0 and 1, got {self.train_fraction}"
                )
            if self.repeats < 1:
                raise DataError("repeats must be >= 1")
        object.__setattr__(self, "train_subjects", tuple(self.train_subjects))

    @classmethod
    def msr3d(cls, subset, train_subjects=DEFAULT_TRAIN_SUBJECTS):
        return cls(MSR3D, subset, train_subjects=tuple(train_subjects))

    @classmethod
    def kard(cls, subset, experiment, repeats=10, seed=0):
        return cls(
            KARD, subset, experiment=experiment, split_rule="FractionalRandom",
            train_fraction=EXPERIMENT_FRACTIONS[experiment], repeats=repeats, seed=seed,
        )

    @property
    def label(self):
        if self.experiment:
            return f"{self.dataset_id}-{self.subset_name}-{self.experiment}"
        return f"{self.dataset_id}-{self.subset_name}"

    def to_dict(self):
        return {
            "dataset": self.dataset_id,
            "subset": self.subset_name,
            "experiment": self.experiment,
            "split_rule": self.split_rule,
            "train_fraction": None if self.train_fraction is None else str(self.train_fraction),
            "repeats": self.repeats,
            "seed": self.seed,
            "train_subjects": list(self.train_subjects),
        }


@dataclass(frozen=True)
class Split:
    train_ids: frozenset
    test_ids: frozenset

    def __post_init__(self):
        if self.train_ids & self.test_ids:
            raise AssertionError("train and test sides overlap")


# --------------------------------------------------------------------------
# file parsing

FILE_PATTERNS = {
    MSR3D: re.compile(r"^a(\d{2})_s(\d{2})_e(\d{2})_skeleton3D\.txt$"),
    KARD: re.compile(r"^a(\d{2})_s(\d{2})_e(\d{2})_realworld\.txt$"),
}
COLUMNS = {MSR3D: 4, KARD: 3}


@dataclass(frozen=True)
class CorpusLayout:
    """How a dataset's raw files are named and laid out on disk."""

    pattern: re.Pattern
    columns: int
    num_joints: int

    @classmethod
    def default(cls, dataset):
        return cls(FILE_PATTERNS[dataset], COLUMNS[dataset], DEFAULT_JOINTS[dataset])


@dataclass
class Corpus:
    """Parsed sequences plus what was dropped and why."""

    dataset_id: str
    sequences: list
    diagnostics: list = field(default_factory=list)
    invalid: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.sequences)

    def __len__(self):
        return len(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]


def parse_skeleton_text(text, columns, num_joints):
    """Parse whitespace-separated rows into an (N, K, 3) array.

    Raises ``DataError`` naming the offending line for malformed or
    non-finite rows, or when the row count is not a multiple of K.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != columns:
            raise DataError(f"line {lineno}: expected {columns} values, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric value in {line!r}") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"line {lineno}: non-finite value in {line!r}")
        rows.append(vals)
    if not rows:
        raise DataError("file contains no joint rows")
    if len(rows) % num_joints:
        raise DataError(
            f"{len(rows)} joint rows is not a multiple of the joint count {num_joints}"
        )
    arr = np.array(rows, dtype=np.float64).reshape(-1, num_joints, columns)
    return arr


def validity_filter(seq, num_joints=None):
    """False if any frame has every joint at the origin or K is wrong."""
    expected = DEFAULT_JOINTS[seq.dataset_id] if num_joints is None else num_joints
    if seq.num_joints != expected:
        return False
    all_zero = np.all(seq.coords == 0, axis=(1, 2))
    return not bool(all_zero.any())


def read_exclusion_list(path):
    """Sequence names (``a01_s02_e03``) to drop, one per line; ``#`` starts a comment."""
    names = set()
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                names.add(_sequence_name(line))
    return names


def _sequence_name(token):
    m = re.search(r"a(\d+)_s(\d+)_e(\d+)", token)
    if not m:
        raise DataError(f"cannot read a sequence identifier from {token!r}")
    a, s, e = (int(g) for g in m.groups())
    return f"a{a:02d}_s{s:02d}_e{e:02d}"


def parse_corpus(root_path, dataset_id, layout=None, exclude=(), workers=1):
    """Parse every matching file under ``root_path`` into a :class:`Corpus`.

    Unreadable or malformed files become entries in ``corpus.diagnostics``;
    sequences failing :func:`validity_filter` go to ``corpus.invalid`` and
    names listed in ``exclude`` to ``corpus.excluded``.
    """
    if dataset_id not in DATASETS:
        raise DataError(f"unknown dataset {dataset_id!r}")
    layout = layout or CorpusLayout.default(dataset_id)
    if not os.path.isdir(root_path):
        raise DataError(f"corpus directory not found: {root_path}")

    candidates = []
    for dirpath, _, filenames in os.walk(root_path):
        for fname in sorted(filenames):
            m = layout.pattern.match(fname)
            if m:
                candidates.append((os.path.join(dirpath, fname), m))
    candidates.sort(key=lambda c: c[0])

    def load(item):
        path, m = item
        a, s, e = (int(g) for g in m.groups()[:3])
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            return None, f"{path}: unreadable ({exc})"
        try:
            arr = parse_skeleton_text(text, layout.columns, layout.num_joints)
            conf = arr[:, :, 3] if layout.columns > 3 else None
            seq = SkeletonSequence(arr[:, :, :3], a, s, e, dataset_id, conf)
        except DataError as exc:
            return None, f"{path}: {exc}"
        return seq, None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            loaded = list(pool.map(load, candidates))
    else:
        loaded = [load(c) for c in candidates]

    exclude = {_sequence_name(x) for x in exclude}
    corpus = Corpus(dataset_id, [])
    seen = set()
    for seq, diag in loaded:
        if diag is not None:
            corpus.diagnostics.append(diag)
            continue
        if seq.key in seen:
            corpus.diagnostics.append(f"duplicate sequence {seq.name}")
            continue
        seen.add(seq.key)
        if seq.name in exclude:
            corpus.excluded.append(seq.name)
        elif not validity_filter(seq, layout.num_joints):
            corpus.invalid.append(seq.name)
        else:
            corpus.sequences.append(seq)
    for d in corpus.diagnostics:
        log.warning(d)
    if not corpus.sequences:
        raise DataError(f"no sequences found under {root_path}")
    return corpus


# --------------------------------------------------------------------------
# canonical interchange format


def format_sequence(seq):
    """Header ``dataset action subject episode N K`` then N*K rows of ``x y z``."""
    n, k, _ = seq.coords.shape
    lines = [f"{seq.dataset_id} {seq.action_id} {seq.subject_id} {seq.episode_id} {n} {k}"]
    for x, y, z in seq.coords.reshape(-1, 3).tolist():
        lines.append(f"{x!r} {y!r} {z!r}")
    return "\n".join(lines) + "\n"


def parse_sequence(text):
    lines = text.splitlines()
    if not lines:
        raise DataError("empty sequence file")
    head = lines[0].split()
    if len(head) != 6:
        raise DataError(f"bad header {lines[0]!r}")
    dataset, a, s, e, n, k = head[0], *map(int, head[1:])
    body = "\n".join(lines[1:])
    arr = parse_skeleton_text(body, 3, k)
    if arr.shape[0] != n:
        raise DataError(f"header declares {n} frames, body has {arr.shape[0]}")
    return SkeletonSequence(arr, a, s, e, dataset)


def write_sequence(path, seq):
    with open(path, "w") as fh:
        fh.write(format_sequence(seq))


def read_sequence(path):
    with open(path) as fh:
        return parse_sequence(fh.read())


# --------------------------------------------------------------------------
# protocols


def make_split(corpus, proto):
    """Materialize the train/test partition(s) of ``proto`` over ``corpus``.

    Returns a list of :class:`Split` holding sequence keys. CrossSubject gives
    one split; FractionalRandom gives ``proto.repeats`` class-stratified
    splits, repeat ``r`` drawn from ``numpy.random.default_rng([seed, r])``.
    """
    sequences = list(corpus)
    if not sequences:
        raise DataError("cannot split an empty corpus")
    wanted = subset_action_ids(proto.dataset_id, proto.subset_name)
    by_action = {}
    for seq in sequences:
        if seq.dataset_id != proto.dataset_id:
            raise DataError(f"sequence {seq.name} belongs to {seq.dataset_id}, not {proto.dataset_id}")
        if seq.action_id in wanted:
            by_action.setdefault(seq.action_id, []).append(seq)
    missing = [a for a in wanted if a not in by_action]
    if missing:
        names = [ACTIONS[proto.dataset_id][a] for a in missing]
        raise DataError(f"subset {proto.subset_name} actions absent from corpus: {names}")

    if proto.split_rule == "CrossSubject":
        train_subjects = set(proto.train_subjects)
        train, test = set(), set()
        for seqs in by_action.values():
            for seq in seqs:
                (train if seq.subject_id in train_subjects else test).add(seq.key)
        if not train or not test:
            raise DataError("cross-subject split leaves one side empty")
        return [Split(frozenset(train), frozenset(test))]

    fraction = float(proto.train_fraction)
    for aid, seqs in by_action.items():
        if len(seqs) < 2:
            raise DataError(
                f"action {ACTIONS[proto.dataset_id][aid]!r} has {len(seqs)} sequence(s); "
                "a stratified split needs at least 2"
            )
    splits = []
    for r in range(proto.repeats):
        rng = np.random.default_rng([proto.seed, r])
        train, test = set(), set()
        for aid in sorted(by_action):
            keys = sorted(seq.key for seq in by_action[aid])
            n = len(keys)
            n_train = min(max(int(np.floor(fraction * n + 0.5)), 1), n - 1)
            order = rng.permutation(n)
            train.update(keys[i] for i in order[:n_train])
            test.update(keys[i] for i in order[n_train:])
        splits.append(Split(frozenset(train), frozenset(test)))
    return splits
