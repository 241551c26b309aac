"""Labeled synthetic datasets on the unit sphere with two-view augmentation.

Class centers are normalized Gaussians; samples are normalize(center +
sigma_c * g). Augmentation is additive Gaussian noise plus renormalization,
which preserves the two-views-of-one-sample positive contract and makes the
true-positive similarity distribution directly controllable via sigma_a.
Centers are not forced apart: with ambient dimension >= 8 they land nearly
orthogonal on their own, so experiments should pick D_in accordingly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .geometry import l2_normalize
from .numeric import Rng


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    samples_per_class: int
    ambient_dim: int
    intra_class_sigma: float
    augment_sigma: float
    seed: int
    long_tail_rho: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.samples_per_class < 1:
            raise ValidationError("need at least 1 sample per class")
        if self.ambient_dim < 2:
            raise ValidationError("ambient dimension must be at least 2")
        if self.intra_class_sigma <= 0:
            raise ValidationError("intra-class sigma must be positive")
        if self.augment_sigma < 0:
            raise ValidationError("augment sigma must be non-negative")
        if not (0.0 < self.long_tail_rho <= 1.0):
            raise ValidationError("long-tail rho must lie in (0, 1]")

    def class_sizes(self) -> list[int]:
        """M_c = max(1, round(M * rho^c)); rho = 1 gives balanced classes."""
        return [
            max(1, int(round(self.samples_per_class * self.long_tail_rho**c)))
            for c in range(self.num_classes)
        ]

    def to_dict(self, include_seed: bool = True) -> dict:
        d = {
            "num_classes": self.num_classes,
            "samples_per_class": self.samples_per_class,
            "ambient_dim": self.ambient_dim,
            "intra_class_sigma": self.intra_class_sigma,
            "augment_sigma": self.augment_sigma,
            "long_tail_rho": self.long_tail_rho,
        }
        if include_seed:
            d["seed"] = self.seed
        return d


@dataclass
class Dataset:
    inputs: np.ndarray  # N x D raw (unit-norm) vectors
    labels: np.ndarray  # N class ids
    class_centers: Optional[np.ndarray]  # C x D unit vectors; None when loaded
    sample_ids: list[str]

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def sample_class_points(
    centers: np.ndarray, sizes: list[int], sigma: float, rng: Rng, id_prefix: str = "s"
) -> Dataset:
    """Draw normalize(center + sigma * g) points, `sizes[c]` per class."""
    rows, labels, ids = [], [], []
    counter = 0
    for c, size in enumerate(sizes):
        noise = sigma * rng.normal((size, centers.shape[1]))
        rows.append(l2_normalize(centers[c][None, :] + noise))
        labels.extend([c] * size)
        ids.extend(f"{id_prefix}{counter + i:05d}" for i in range(size))
        counter += size
    return Dataset(
        inputs=np.vstack(rows),
        labels=np.array(labels, dtype=np.int64),
        class_centers=centers,
        sample_ids=ids,
    )


def generate(spec: SyntheticSpec) -> Dataset:
    """Deterministic dataset for a spec: centers and samples from spec.seed."""
    rng = Rng(spec.seed).substream("data")
    centers = l2_normalize(rng.normal((spec.num_classes, spec.ambient_dim)))
    return sample_class_points(centers, spec.class_sizes(), spec.intra_class_sigma, rng)


def generate_eval_split(spec: SyntheticSpec, centers: np.ndarray, rng: Rng) -> Dataset:
    """Fresh draws around the same centers for probing; ~M/5 per class."""
    sizes = [max(1, m // 5) for m in spec.class_sizes()]
    return sample_class_points(centers, sizes, spec.intra_class_sigma, rng, id_prefix="t")


def holdout_split(dataset: Dataset, fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Deterministic per-class holdout for datasets without known centers."""
    if not (0.0 < fraction < 1.0):
        raise ValidationError("holdout fraction must lie in (0, 1)")
    stride = max(2, int(round(1.0 / fraction)))
    test_mask = np.zeros(dataset.size, dtype=bool)
    for c in np.unique(dataset.labels):
        idx = np.flatnonzero(dataset.labels == c)
        test_mask[idx[::stride]] = True
    if test_mask.all():
        raise ValidationError("holdout would consume the whole dataset")

    def subset(mask: np.ndarray) -> Dataset:
        return Dataset(
            inputs=dataset.inputs[mask],
            labels=dataset.labels[mask],
            class_centers=dataset.class_centers,
            sample_ids=[dataset.sample_ids[i] for i in np.flatnonzero(mask)],
        )

    return subset(~test_mask), subset(test_mask)


def augment_pair(x: np.ndarray, sigma_a: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Two independent noisy views of one input, renormalized to the sphere."""
    views = []
    for _ in range(2):
        for attempt in range(2):
            candidate = x + sigma_a * rng.normal(x.shape)
            if np.linalg.norm(candidate) > 1e-12:
                views.append(l2_normalize(candidate))
                break
            if attempt == 1:
                raise DegenerateInputError("augmentation produced a zero vector twice")
    return views[0], views[1]


def augment_views(inputs: np.ndarray, sigma_a: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Batched augment_pair: one (view1, view2) per input row.

    Draws per-view noise blocks in a fixed order so the stream is stable.
    """
    if sigma_a == 0.0:
        base = l2_normalize(inputs)
        return base, base.copy()
    v1 = inputs + sigma_a * rng.normal(inputs.shape)
    v2 = inputs + sigma_a * rng.normal(inputs.shape)
    norms1 = np.linalg.norm(v1, axis=1)
    norms2 = np.linalg.norm(v2, axis=1)
    for bad in np.flatnonzero(norms1 <= 1e-12):
        v1[bad] = inputs[bad] + sigma_a * rng.normal(inputs.shape[1])
    for bad in np.flatnonzero(norms2 <= 1e-12):
        v2[bad] = inputs[bad] + sigma_a * rng.normal(inputs.shape[1])
    return l2_normalize(v1), l2_normalize(v2)


def make_batches(dataset: Dataset, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; a final batch of size < 2 is dropped."""
    if batch_size < 2:
        raise ValidationError("batch size must be at least 2")
    perm = rng.permutation(dataset.size)
    batches = [perm[i : i + batch_size] for i in range(0, dataset.size, batch_size)]
    if batches and len(batches[-1]) < 2:
        batches.pop()
    return batches


def write_dataset(path: str | Path, dataset: Dataset) -> None:
    """JSON-lines dump: {"id", "label", "x"} per sample (centers not stored)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for i in range(dataset.size):
            record = {
                "id": dataset.sample_ids[i],
                "label": int(dataset.labels[i]),
                "x": [float(v) for v in dataset.inputs[i]],
            }
            fh.write(json.dumps(record) + "\n")


def read_dataset(path: str | Path) -> Dataset:
    inputs, labels, ids = [], [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                inputs.append([float(v) for v in record["x"]])
                labels.append(int(record["label"]))
                ids.append(str(record["id"]))
            except (KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"bad dataset record on line {line_no}: {err}") from err
    if not inputs:
        raise ValidationError(f"dataset file {path} is empty")
    return Dataset(
        inputs=np.array(inputs, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        class_centers=None,
        sample_ids=ids,
    )
