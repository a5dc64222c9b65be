import numpy as np
import pytest

from qcat.corpus import Dataset, Label, Question


CATEGORIES = ["Visas and permits", "Qatar Living Lounge", "Advice and Help",
              "Moving to Qatar", "Salary and Allowances"]


def make_dataset(n, seed=0, labeled=True, name="synthetic"):
    """Deterministic dataset with category/label correlation."""
    rng = np.random.default_rng(seed)
    questions = []
    for i in range(n):
        label = Label(i % 3)
        cat = CATEGORIES[(i + int(rng.integers(0, 2))) % len(CATEGORIES)]
        questions.append(Question(
            id=f"q{i:05d}",
            subject=f"subject {i}",
            body=f"body text number {i} asking about things",
            category=cat,
            label=label if labeled else None,
        ))
    return Dataset(questions, name)


def blob_features(n_per_class, dim, informative, sep, seed):
    """Gaussian blobs: class-informative offsets in the first `informative`
    dimensions on top of unit-scale noise. Class centers are mutually
    orthogonal (equiangular in 2-d) so every one-vs-rest cut is clean."""
    rng = np.random.default_rng(seed)
    if informative >= 3:
        q, _ = np.linalg.qr(rng.normal(size=(informative, informative)))
        centers = sep * q[:, :3].T
    else:
        angles = 2 * np.pi * np.arange(3) / 3
        centers = np.zeros((3, informative))
        centers[:, 0] = sep * np.cos(angles)
        centers[:, informative - 1] = sep * np.sin(angles)
    xs, ys = [], []
    for c in range(3):
        x = rng.normal(0.0, 1.0, (n_per_class, dim))
        x[:, :informative] = centers[c] + rng.normal(0.0, 0.3, (n_per_class, informative))
        xs.append(x)
        ys.append(np.full(n_per_class, c))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    order = rng.permutation(len(y))
    return x[order], y[order]


@pytest.fixture
def tiny_dataset():
    return make_dataset(30, seed=1)
