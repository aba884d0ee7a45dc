"""Loss computations with exact embedding gradients.

Three objectives: batch-all triplet loss for supervised pretraining, a
non-parametric softmax row with its entropy (the confidence indicator for
anchor ranking), and the neighborhood loss that pulls an anchor toward the
stored entries of its discovered neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .numerics import scaled_softmax

if TYPE_CHECKING:
    from .discovery import MemoryBank

_DIST_EPS = 1e-12


class EmptyTripletError(ValueError):
    """The batch contains no (anchor, positive, negative) triple."""


def triplet_loss(
    embeddings: np.ndarray,
    labels: Sequence,
    margin: float,
) -> tuple[float, np.ndarray]:
    """Batch-all triplet loss and its gradient per embedding.

    All ordered triples (a, p, n) with label(a) == label(p), a != p, and
    label(n) != label(a) contribute hinge(d(a,p) - d(a,n) + margin); the
    loss is the mean over the total triple count (inactive triples stay in
    the denominator). Distances are Euclidean.
    """
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin!r}")
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be (n, d), got shape {emb.shape}")
    n = emb.shape[0]
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise ValueError(f"{n} embeddings but {labels.shape[0]} labels")

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)          # a != p
    diff = labels[:, None] != labels[None, :]

    diffs = emb[:, None, :] - emb[None, :, :]
    dist = np.linalg.norm(diffs, axis=2)

    # hinge[a, p, n] = d(a,p) - d(a,n) + m over valid triples
    valid = same[:, :, None] & diff[:, None, :]
    total = int(valid.sum())
    if total == 0:
        raise EmptyTripletError(
            "no valid triplet: need >= 2 identities and a repeated identity"
        )
    hinge = dist[:, :, None] - dist[:, None, :] + margin
    active = valid & (hinge > 0.0)
    loss = float(np.where(active, hinge, 0.0).sum() / total)

    # unit difference directions, zeroed where the distance is degenerate
    safe = dist > _DIST_EPS
    unit = np.zeros_like(diffs)
    unit[safe] = diffs[safe] / dist[safe][:, None]

    w_ap = active.sum(axis=2).astype(np.float64)  # times pair (a,p) is active
    w_an = active.sum(axis=1).astype(np.float64)  # times pair (a,n) is active
    pos_terms = w_ap[:, :, None] * unit
    neg_terms = w_an[:, :, None] * unit
    grads = (
        pos_terms.sum(axis=1) - pos_terms.sum(axis=0)
        - neg_terms.sum(axis=1) + neg_terms.sum(axis=0)
    ) / total
    return loss, grads


@dataclass
class SoftmaxRow:
    """Probabilities of one anchor against every stored bank entry."""

    probs: np.ndarray
    anchor_index: int
    tau: float

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        s = self.probs.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"softmax row sums to {s!r}, not 1")


def softmax_row(
    anchor: np.ndarray,
    bank: "MemoryBank",
    tau: float,
    anchor_index: int = -1,
    include_self: bool = True,
) -> SoftmaxRow:
    """Non-parametric softmax of an anchor's similarities to the whole bank.

    With include_self=False the anchor's own bank entry gets probability
    exactly zero (its similarity is dropped from the denominator).
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    sims = bank.entries @ anchor
    if not include_self:
        if not 0 <= anchor_index < sims.shape[0]:
            raise ValueError("self-exclusion requires a valid anchor_index")
        sims = sims.copy()
        sims[anchor_index] = -np.inf
    return SoftmaxRow(scaled_softmax(sims, tau), anchor_index, tau)


def entropy(row: SoftmaxRow) -> float:
    """Natural-log entropy of a softmax row; in [0, ln N]."""
    p = row.probs[row.probs > 0.0]
    return float(-(p * np.log(p)).sum())


def anchor_neighborhood_loss(
    anchors: Sequence[tuple[int, SoftmaxRow]],
    neighborhoods: Mapping[int, Iterable[int]],
    bank: "MemoryBank",
) -> tuple[float, np.ndarray]:
    """Sum over anchors of -log(probability mass on the anchor's neighborhood).

    Gradients are with respect to each anchor's fresh embedding; bank
    entries are treated as constants. Every neighborhood must contain the
    anchor's own bank index.
    """
    if len(anchors) == 0:
        raise ValueError("anchor set is empty")
    loss = 0.0
    grads = np.zeros((len(anchors), bank.entries.shape[1]), dtype=np.float64)
    for pos, (idx, row) in enumerate(anchors):
        # canonical index order keeps the mass sum deterministic for set inputs
        members = np.unique(np.fromiter(neighborhoods[idx], dtype=np.intp))
        if idx not in members:
            raise ValueError(f"neighborhood of bank index {idx} must include itself")
        p = row.probs
        mass = float(p[members].sum())
        loss += -np.log(mass)
        indicator = np.zeros_like(p)
        indicator[members] = 1.0
        coeff = p * (1.0 - indicator / mass) / row.tau
        grads[pos] = coeff @ bank.entries
    return float(loss), grads
