import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from skelact.dataset_io import KARD, MSR3D, SkeletonSequence  # noqa: E402


def write_msr3d_file(path, coords, conf=1.0):
    with open(path, "w") as fh:
        for frame in coords:
            for x, y, z in frame.tolist():
                fh.write(f"{x!r} {y!r} {z!r} {conf}\n")


def write_kard_file(path, coords):
    with open(path, "w") as fh:
        for frame in coords:
            for x, y, z in frame.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")


def random_coords(rng, n, k):
    return rng.normal(0.0, 0.5, size=(n, k, 3)) + np.array([0.0, 0.0, 2.5])


def make_corpus_dir(root, dataset, actions, subjects=range(1, 11), episodes=(1, 2, 3),
                    frames=6, seed=0):
    """Write a synthetic corpus in the raw on-disk layout of ``dataset``."""
    rng = np.random.default_rng(seed)
    k = 20 if dataset == MSR3D else 15
    os.makedirs(root, exist_ok=True)
    for a in actions:
        for s in subjects:
            for e in episodes:
                coords = random_coords(rng, frames, k)
                if dataset == MSR3D:
                    write_msr3d_file(os.path.join(root, f"a{a:02d}_s{s:02d}_e{e:02d}_skeleton3D.txt"), coords)
                else:
                    write_kard_file(os.path.join(root, f"a{a:02d}_s{s:02d}_e{e:02d}_realworld.txt"), coords)
    return root


def make_sequences(dataset, actions, subjects=range(1, 11), episodes=(1, 2, 3), frames=6,
                   seed=0, separable=False):
    """In-memory corpus. With ``separable`` each action gets a distinct motion pattern."""
    rng = np.random.default_rng(seed)
    k = 20 if dataset == MSR3D else 15
    seqs = []
    for ai, a in enumerate(actions):
        for s in subjects:
            for e in episodes:
                coords = random_coords(rng, frames, k)
                if separable:
                    coords = 0.05 * coords
                    coords[:, ai % k, :] += 1.0 + 0.1 * np.arange(frames)[:, None]
                seqs.append(SkeletonSequence(coords, a, s, e, dataset))
    return seqs


@pytest.fixture(scope="session")
def msr3d_corpus():
    return make_sequences(MSR3D, range(1, 21))


@pytest.fixture(scope="session")
def kard_corpus():
    return make_sequences(KARD, range(1, 19))


def pytest_terminal_summary(terminalreporter):
    from criteria_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
