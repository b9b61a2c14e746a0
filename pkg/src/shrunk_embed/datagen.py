"""Synthetic datasets, CSV dataset I/O and pixel scaling.

Datasets carry a data matrix of shape ``(r, n)`` with samples as columns and
an integer label per sample, re-indexed to ``0..C-1``.
"""
import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from .errors import EmptyDataset, InvalidCovariance, InvalidInput, ParseError


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    classes: Tuple = ()

    @property
    def r(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


def reindex_labels(raw) -> Tuple[np.ndarray, Tuple]:
    """Map labels to ``0..C-1`` in order of first appearance."""
    mapping = {}
    out = np.empty(len(raw), dtype=np.int64)
    for i, lab in enumerate(raw):
        out[i] = mapping.setdefault(lab, len(mapping))
    return out, tuple(mapping)


def toy_ellipses(n_per: int = 1000, seed: int = 42, centers=(-2.0, 0.0, 2.0),
                 x_vars=(0.1, 0.05, 0.07), y_var: float = 1.0, classes=(1, 0, 1)) -> LabeledDataset:
    """Three vertical Gaussian ellipses on the x-axis.

    The middle ellipse is class 0; the two flanking ellipses together form
    class 1, so both class means sit near the origin and the between-class
    scatter carries almost no information about the x-axis that separates them.
    """
    if n_per < 2:
        raise InvalidInput("n_per must be >= 2")
    rng = np.random.default_rng(seed)
    cols, labels = [], []
    for cx, vx, cls in zip(centers, x_vars, classes):
        pts = np.empty((2, n_per))
        pts[0] = cx + np.sqrt(vx) * rng.standard_normal(n_per)
        pts[1] = np.sqrt(y_var) * rng.standard_normal(n_per)
        cols.append(pts)
        labels.append(np.full(n_per, cls, dtype=np.int64))
    labels = np.concatenate(labels)
    # class-sorted columns so a saved copy reloads with the same label ids
    order = np.argsort(labels, kind="stable")
    return LabeledDataset(X=np.hstack(cols)[:, order], labels=labels[order], name="toy-ellipses",
                          classes=tuple(sorted(set(classes))))


def gaussian_mixture(spec: Sequence, seed: int = 0, name: str = "mixture") -> LabeledDataset:
    """Sample from a list of ``(center, covariance, count, label)`` components."""
    rng = np.random.default_rng(seed)
    cols, raw = [], []
    for center, cov, count, label in spec:
        center = np.asarray(center, dtype=float)
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (center.size, center.size) or not np.allclose(cov, cov.T):
            raise InvalidCovariance("covariance must be a symmetric matrix matching the center")
        vals, vecs = np.linalg.eigh(cov)
        if vals.size and vals[0] < -1e-12 * max(1.0, abs(vals[-1])):
            raise InvalidCovariance(f"covariance is not positive semidefinite (eigenvalue {vals[0]:.3e})")
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
        z = rng.standard_normal((center.size, int(count)))
        cols.append(center[:, None] + factor @ z)
        raw.extend([label] * int(count))
    labels, classes = reindex_labels(raw)
    return LabeledDataset(X=np.hstack(cols), labels=labels, name=name, classes=classes)


def multimodal_spec(n_classes=5, modes=3, per_mode=40, dim=30, spread=1.5, noise=1.0, seed=0):
    """Component list for :func:`gaussian_mixture` with several modes per class.

    Mode centers of each class are drawn at random and then shifted so that
    every class has its population mean at the origin.
    """
    rng = np.random.default_rng(seed)
    cov = noise ** 2 * np.eye(dim)
    spec = []
    for c in range(n_classes):
        centers = spread * rng.standard_normal((modes, dim))
        centers -= centers.mean(axis=0)
        spec.extend((m, cov, per_mode, c) for m in centers)
    return spec


def scale_pixels(X, denominator: float = 256.0) -> np.ndarray:
    """Divide gray levels by ``denominator`` (256 maps 8-bit data into [0, 1))."""
    X = np.asarray(X, dtype=float)
    if np.any(X < 0):
        raise InvalidInput("pixel values must be nonnegative")
    return X / denominator


def load_csv(path) -> LabeledDataset:
    """Read a dataset file: no header, ``label,f1,...,fr`` per row."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    rows, raw = [], []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise ParseError("need a label and at least one feature", lineno)
        elif len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", lineno)
        try:
            raw.append(int(row[0]))
        except ValueError:
            raise ParseError(f"label {row[0]!r} is not an integer", lineno) from None
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"non-numeric feature ({exc})", lineno) from None
    if not rows:
        raise EmptyDataset(f"{path} contains no samples")
    labels, classes = reindex_labels(raw)
    X = np.array(rows, dtype=float).T
    if not np.all(np.isfinite(X)):
        raise ParseError("non-finite feature value")
    return LabeledDataset(X=X, labels=labels, name=path.stem, classes=classes)


def save_csv(dataset_or_X, path, labels=None):
    """Write a dataset in the format read by :func:`load_csv` (17 significant digits)."""
    if isinstance(dataset_or_X, LabeledDataset):
        X, labels = dataset_or_X.X, dataset_or_X.labels
    else:
        X = np.asarray(dataset_or_X, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for j in range(X.shape[1]):
            w.writerow([int(labels[j])] + [format(v, ".17g") for v in X[:, j]])
