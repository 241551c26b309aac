"""Contrastive loss with entry-wise temperatures, and its exact gradients.

Two differentiation modes exist. DETACHED treats the temperatures as
constants (the trained objective: temperatures are computed from similarity
values excluded from the gradient tape). COUPLED differentiates through the
temperature function as well, replacing 1/tau by (tau - s * dtau/ds) / tau^2
per entry; it exists for analysis of the profile-design argument, not for
training. Both modes share the forward value.

The loss is the mean (not sum) over the 2N anchor rows of the cross-entropy
against the positive column, so learning rates are batch-size independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BatchTooSmallError, ValidationError
from .geometry import (
    EmbeddingBatch,
    LogitsBlock,
    build_logits_block,
    clamp_similarities,
    strip_diagonal,
)
from .numeric import row_log_sum_exp, stable_row_softmax
from .temperature import TemperatureProfile


class LossMode(Enum):
    DETACHED = "detached"
    COUPLED = "coupled"


@dataclass
class GradientBundle:
    """Loss value with all intermediate gradients of one batch."""

    loss: float
    probs: np.ndarray  # 2N x (2N-1) row-softmax of scaled logits
    dL_ds: np.ndarray  # 2N x (2N-1) gradient w.r.t. raw similarities
    dL_dz: np.ndarray  # 2N x D displacement vectors (view-a rows first)


def forward_from_block(block: LogitsBlock) -> float:
    """Mean cross-entropy of the positive column over all 2N rows."""
    lse = row_log_sum_exp(block.scaled)
    losses = lse - block.positive_scaled()
    return float(np.mean(losses))


def forward(batch: EmbeddingBatch, profile: TemperatureProfile) -> float:
    """Loss of a batch under a temperature profile."""
    return forward_from_block(build_logits_block(batch, profile))


def grad_wrt_similarity(
    block: LogitsBlock, mode: LossMode = LossMode.DETACHED, probs: np.ndarray | None = None
) -> np.ndarray:
    """Gradient of the mean loss w.r.t. every similarity entry.

    DETACHED: -(1 - p) / tau / (2N) at the positive column and
    p / tau / (2N) at negative entries. COUPLED multiplies the softmax
    residual by (tau - s * dtau/ds) / tau^2 instead of 1/tau. Pass `probs`
    to reuse an already-computed row softmax of block.scaled.
    """
    if probs is None:
        probs = stable_row_softmax(block.scaled)
    residual = probs.copy()
    rows = np.arange(block.num_rows)
    residual[rows, block.positive_column] -= 1.0
    if mode is LossMode.DETACHED:
        factor = 1.0 / block.temperatures
    else:
        dtau = block.profile.dtau_ds(block.s)
        # (tau - s dtau) / tau^2, factored so a zero dtau reproduces the
        # detached 1/tau bit for bit
        factor = (1.0 - block.s * dtau / block.temperatures) / block.temperatures
    return residual * factor / block.num_rows


def _scatter_offdiag(g: np.ndarray) -> np.ndarray:
    """Place an Nx(N-1) gradient back onto the off-diagonal of an NxN matrix."""
    n = g.shape[0]
    full = np.zeros((n, n))
    full[~np.eye(n, dtype=bool)] = g.ravel()
    return full


def chain_to_embeddings(batch: EmbeddingBatch, dL_ds: np.ndarray) -> np.ndarray:
    """Chain a similarity-block gradient into the 2N embedding rows.

    Every block entry is a dot product of two embeddings; each entry
    contributes its gradient times the partner vector to both participants.
    The positive-pair term enters with weight -(1 - p)/tau and every negative
    pair enters once per anchor ordering, which is what gives the
    p(anchor->other) + p(other->anchor) structure of the displacement vector.
    """
    n = batch.n
    va, vb = batch.view_a, batch.view_b
    g12 = dL_ds[:n, :n]
    g21 = dL_ds[n:, :n]
    g11 = _scatter_offdiag(dL_ds[:n, n:])
    g22 = _scatter_offdiag(dL_ds[n:, n:])
    dz_a = g12 @ vb + (g11 + g11.T) @ va + g21.T @ vb
    dz_b = g21 @ va + (g22 + g22.T) @ vb + g12.T @ va
    return np.vstack([dz_a, dz_b])


def grad_wrt_embeddings(
    batch: EmbeddingBatch,
    profile: TemperatureProfile,
    mode: LossMode = LossMode.DETACHED,
) -> GradientBundle:
    """Loss, probabilities, dL/ds, and dL/dz of one batch.

    The embeddings are treated as free points of the similarity map
    s_ij = z_i . z_j; the normalization Jacobian belongs to the encoder.
    """
    block = build_logits_block(batch, profile)
    probs = stable_row_softmax(block.scaled)
    dL_ds = grad_wrt_similarity(block, mode, probs=probs)
    dL_dz = chain_to_embeddings(batch, dL_ds)
    return GradientBundle(
        loss=forward_from_block(block),
        probs=probs,
        dL_ds=dL_ds,
        dL_dz=dL_dz,
    )


def relative_penalty(scaled_row: np.ndarray, negative_index: int, positive_index: int) -> float:
    """Softmax share of one negative among a row's negative entries.

    This is |dL/ds_ij| / |dL/ds_ii+| for a fixed-temperature row: the
    fraction of the anchor's repulsion budget spent on that negative.
    Computed with max subtraction.
    """
    row = np.asarray(scaled_row, dtype=np.float64)
    if row.ndim != 1:
        raise ValidationError("scaled_row must be one-dimensional")
    if not (0 <= positive_index < row.size) or not (0 <= negative_index < row.size):
        raise ValidationError("row indices out of range")
    if negative_index == positive_index:
        raise ValidationError("the positive entry has no relative penalty")
    negatives = np.delete(row, positive_index)
    neg_idx = negative_index - (1 if negative_index > positive_index else 0)
    shifted = negatives - negatives.max()
    e = np.exp(shifted)
    return float(e[neg_idx] / np.cumsum(e)[-1])


def loss_on_embeddings(
    z: np.ndarray,
    profile: TemperatureProfile,
    frozen_temperatures: np.ndarray | None = None,
) -> float:
    """Loss as a scalar field over a flat stack of 2N embedding rows.

    Intended for finite-difference checks, so rows need not be unit norm.
    With `frozen_temperatures` the entry-wise temperatures are held fixed
    (differentiating this field reproduces the DETACHED gradient); without,
    temperatures are recomputed from the perturbed similarities (COUPLED).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] % 2 != 0:
        raise ValidationError("z must stack the two views as a 2N x D matrix")
    n = z.shape[0] // 2
    if n < 2:
        raise BatchTooSmallError(f"need at least 2 samples (got {n})")
    va, vb = z[:n], z[n:]
    s12 = va @ vb.T
    top = np.hstack([s12, strip_diagonal(va @ va.T)])
    bottom = np.hstack([s12.T.copy(), strip_diagonal(vb @ vb.T)])
    s = clamp_similarities(np.vstack([top, bottom]))
    tau = profile.tau(s) if frozen_temperatures is None else frozen_temperatures
    scaled = s / tau
    rows = np.arange(2 * n)
    lse = row_log_sum_exp(scaled)
    return float(np.mean(lse - scaled[rows, rows % n]))
