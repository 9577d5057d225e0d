"""Skeleton sequence to 40x40 RGB image encoding.

Pipeline: per-sequence min-max statistics, scale every coordinate to
[0, 255], lay frames out as rows and (part-reordered) joints as columns with
x/y/z in the three channels, bilinearly resize to 40x40, round to uint8.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .dataset_io import KARD, MSR3D, DataError, SkeletonSequence

IMAGE_SIZE = 40


@dataclass(frozen=True)
class NormalizationStats:
    min_c: float
    max_c: float

    def __post_init__(self):
        if not (math.isfinite(self.min_c) and math.isfinite(self.max_c)):
            raise DataError("normalization extrema must be finite")
        if self.min_c > self.max_c:
            raise DataError(f"min {self.min_c} exceeds max {self.max_c}")


@dataclass(frozen=True)
class PartMap:
    """Five joint-index groups: left arm, right arm, trunk, left leg, right leg."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(tuple(sorted(int(j) for j in p)) for p in self.parts)
        if len(parts) != 5:
            raise ValueError(f"a part map needs exactly 5 parts, got {len(parts)}")
        flat = [j for p in parts for j in p]
        if len(set(flat)) != len(flat):
            raise ValueError("part map groups overlap")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError(f"part map must cover joints 0..{len(flat) - 1} exactly")
        object.__setattr__(self, "parts", parts)

    @property
    def num_joints(self):
        return sum(len(p) for p in self.parts)

    def column_order(self):
        return [j for p in self.parts for j in p]

    @classmethod
    def identity(cls, num_joints):
        """Keeps the original joint order (all joints in P1; other parts empty)."""
        return cls((tuple(range(num_joints)), (), (), (), ()))

    @classmethod
    def parse(cls, text):
        parts = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            label, _, rest = line.partition(":")
            label = label.strip().upper()
            if label not in ("P1", "P2", "P3", "P4", "P5"):
                raise ValueError(f"bad part map line {line!r}")
            parts[label] = tuple(int(t) for t in rest.replace(",", " ").split())
        missing = [p for p in ("P1", "P2", "P3", "P4", "P5") if p not in parts]
        if missing:
            raise ValueError(f"part map is missing {missing}")
        return cls(tuple(parts[f"P{i}"] for i in range(1, 6)))

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.parse(fh.read())

    def format(self):
        return "".join(f"P{i}: {','.join(map(str, p))}\n" for i, p in enumerate(self.parts, 1))


def default_part_map(dataset_id):
    fname = {MSR3D: "msr3d.txt", KARD: "kard.txt"}[dataset_id]
    text = resources.files("skelact.partmaps").joinpath(fname).read_text()
    return PartMap.parse(text)


def _coords(seq):
    return seq.coords if isinstance(seq, SkeletonSequence) else np.asarray(seq, dtype=np.float64)


def compute_stats(seq):
    """Extrema over the pooled x, y and z values of every joint in every frame."""
    c = _coords(seq)
    if not np.all(np.isfinite(c)):
        raise DataError("non-finite coordinate")
    return NormalizationStats(float(c.min()), float(c.max()))


def normalize(v, stats):
    """255 * ((v - min) / (max - min)); 0 when the range is degenerate.

    Dividing first makes the extrema land on exactly 0.0 and 255.0.
    """
    span = stats.max_c - stats.min_c
    if np.ndim(v) == 0:
        return 0.0 if span == 0 else 255.0 * ((float(v) - stats.min_c) / span)
    v = np.asarray(v, dtype=np.float64)
    if span == 0:
        return np.zeros_like(v)
    return 255.0 * ((v - stats.min_c) / span)


def stack_frames(seq, stats, part_map):
    """(N, K, 3) float image: row t is frame t, columns follow ``part_map``."""
    c = _coords(seq)
    if part_map.num_joints != c.shape[1]:
        raise DataError(
            f"part map covers {part_map.num_joints} joints but the sequence has {c.shape[1]}"
        )
    return normalize(c[:, part_map.column_order(), :], stats)


def _resize_axis(n_in, n_out):
    """Source indices and weights for half-pixel-centred linear interpolation."""
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img, out_h=IMAGE_SIZE, out_w=IMAGE_SIZE):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected an (H, W, C) image, got {img.shape}")
    r0, r1, wr = _resize_axis(img.shape[0], out_h)
    c0, c1, wc = _resize_axis(img.shape[1], out_w)
    wr = wr[:, None, None]
    wc = wc[None, :, None]
    top = (1.0 - wc) * img[r0][:, c0] + wc * img[r0][:, c1]
    bottom = (1.0 - wc) * img[r1][:, c0] + wc * img[r1][:, c1]
    return (1.0 - wr) * top + wr * bottom


def quantize(grid):
    """Round half away from zero, clamp to [0, 255], cast to uint8."""
    grid = np.asarray(grid, dtype=np.float64)
    rounded = np.sign(grid) * np.floor(np.abs(grid) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def encode(seq, part_map=None, size=IMAGE_SIZE):
    """Encode one sequence as a (size, size, 3) uint8 image."""
    if part_map is None:
        if not isinstance(seq, SkeletonSequence):
            raise ValueError("a part map is required for raw coordinate arrays")
        part_map = default_part_map(seq.dataset_id)
    stats = compute_stats(seq)
    raw = stack_frames(seq, stats, part_map)
    return quantize(resize_bilinear(raw, size, size))


class SkeletonImageEncoder(TransformerMixin, BaseEstimator):
    """Stateless transformer: list of sequences -> (n, 40, 40, 3) uint8 array.

    ``part_map`` may be a :class:`PartMap`, a path to a part-map file, or
    None to use the dataset's shipped default.
    """

    def __init__(self, part_map=None, size=IMAGE_SIZE):
        self.part_map = part_map
        self.size = size

    def fit(self, X=None, y=None):
        self.part_map_ = self._resolve()
        return self

    def _resolve(self):
        if self.part_map is None or isinstance(self.part_map, PartMap):
            return self.part_map
        return PartMap.from_file(os.fspath(self.part_map))

    def transform(self, X):
        pm = self.part_map_ if hasattr(self, "part_map_") else self._resolve()
        X = list(X)
        out = np.empty((len(X), self.size, self.size, 3), dtype=np.uint8)
        for i, seq in enumerate(X):
            out[i] = encode(seq, pm, self.size)
        return out

    def __sklearn_is_fitted__(self):
        return True


# --------------------------------------------------------------------------
# persistence


def save_png(path, img):
    from PIL import Image

    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) uint8 image, got {img.dtype} {img.shape}")
    Image.fromarray(img).save(path, format="PNG")


def load_png(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


MANIFEST_NAME = "manifest.txt"


def write_manifest(path, rows):
    """Rows of ``image_path action subject episode split_role [variant]``."""
    with open(path, "w") as fh:
        for row in rows:
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_manifest(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (5, 6):
                raise DataError(f"{path}:{lineno}: expected 5 or 6 fields, got {len(parts)}")
            row = {
                "image_path": parts[0],
                "action": int(parts[1]),
                "subject": int(parts[2]),
                "episode": int(parts[3]),
                "split_role": parts[4],
            }
            if len(parts) == 6:
                row["variant"] = parts[5]
            rows.append(row)
    return rows
