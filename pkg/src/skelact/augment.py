"""Training-time expansion of 40x40 encoded images into 32x32 variants."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

SOURCE_SIZE = 40
CROP_SIZE = 32

# 3x3 grid of offsets without its centre, row-major
CROP_OFFSETS = tuple((r, c) for r in (0, 4, 8) for c in (0, 4, 8) if (r, c) != (4, 4))
CENTER_OFFSET = (4, 4)
CHANNEL_PERMUTATIONS = tuple(permutations(range(3)))


@dataclass(frozen=True)
class AugmentPolicy:
    crops_enabled: bool = True
    flips_enabled: bool = True
    color_enabled: bool = True
    random_crops: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.crops_enabled:
            raise ValueError("cropping must stay enabled: the network takes 32x32 inputs")
        if self.random_crops < 0:
            raise ValueError("random_crops must be >= 0")

    @property
    def multiplicity(self):
        crops = self.random_crops or len(CROP_OFFSETS)
        return crops * (3 if self.flips_enabled else 1) * (len(CHANNEL_PERMUTATIONS) if self.color_enabled else 1)


def _check_source(img):
    img = np.asarray(img)
    if img.shape != (SOURCE_SIZE, SOURCE_SIZE, 3):
        raise ValueError(f"expected a {SOURCE_SIZE}x{SOURCE_SIZE}x3 image, got {img.shape}")
    return img


def crop(img, offset):
    r, c = offset
    return img[r:r + CROP_SIZE, c:c + CROP_SIZE]


def crops8(img):
    img = _check_source(img)
    return [crop(img, off).copy() for off in CROP_OFFSETS]


def random_crop_offsets(n, rng):
    span = SOURCE_SIZE - CROP_SIZE + 1
    return [tuple(int(v) for v in rng.integers(0, span, size=2)) for _ in range(n)]


def flip_h(img):
    return np.asarray(img)[:, ::-1].copy()


def flip_v(img):
    return np.asarray(img)[::-1].copy()


def color_variants(img):
    """All six channel orderings, identity first, in lexicographic order."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected a 3-channel image, got {img.shape}")
    return [img[:, :, list(p)].copy() for p in CHANNEL_PERMUTATIONS]


def eval_view(img):
    """The single 32x32 centre crop used at test time."""
    return crop(_check_source(img), CENTER_OFFSET).copy()


def augment_all(img, policy=None, with_names=False, index=0):
    """Every variant of ``img`` under ``policy``, in crop -> flip -> colour order.

    With ``with_names`` returns ``(images, names)``; names look like
    ``crop3.flipH.perm4``. Random crop offsets, when enabled, are drawn from
    ``(policy.seed, index)`` so each image of a dataset gets its own.
    """
    policy = policy or AugmentPolicy()
    img = _check_source(img)
    if policy.random_crops:
        rng = np.random.default_rng([policy.seed, index])
        offsets = random_crop_offsets(policy.random_crops, rng)
    else:
        offsets = CROP_OFFSETS
    flips = [("orig", lambda a: a)]
    if policy.flips_enabled:
        flips += [("flipH", flip_h), ("flipV", flip_v)]

    images, names = [], []
    for ci, off in enumerate(offsets):
        base = crop(img, off)
        for fname, fn in flips:
            flipped = fn(base)
            variants = color_variants(flipped) if policy.color_enabled else [flipped.copy()]
            for pi, v in enumerate(variants):
                images.append(v)
                names.append(f"crop{ci}.{fname}.perm{pi}")
    return (images, names) if with_names else images


def augment_dataset(X, y, policy=None, groups=None):
    """Expand a stack of 40x40 images; labels (and optional group ids) are repeated.

    Returns ``(X_aug, y_aug)`` or ``(X_aug, y_aug, groups_aug)``.
    """
    policy = policy or AugmentPolicy()
    X = np.asarray(X)
    y = np.asarray(y)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} images but {len(y)} labels")
    m = policy.multiplicity
    out = np.empty((len(X) * m, CROP_SIZE, CROP_SIZE, 3), dtype=X.dtype)
    for i, img in enumerate(X):
        out[i * m:(i + 1) * m] = np.stack(augment_all(img, policy, index=i))
    y_aug = np.repeat(y, m)
    if groups is None:
        return out, y_aug
    return out, y_aug, np.repeat(np.asarray(groups), m)


class CenterCrop(TransformerMixin, BaseEstimator):
    """(n, 40, 40, 3) -> (n, 32, 32, 3) evaluation views."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return np.stack([eval_view(img) for img in X]) if len(X) else np.empty(
            (0, CROP_SIZE, CROP_SIZE, 3), dtype=np.asarray(X).dtype
        )

    def __sklearn_is_fitted__(self):
        return True
