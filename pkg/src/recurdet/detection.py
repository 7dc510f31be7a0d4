"""Candidate object occurrences: vote shifting and multi-model RANSAC.

Every set pixel of a surviving patch's occurrence map casts a vote for an
object center (the hit minus the patch's embedded coordinate). Greedy
sequential RANSAC then extracts consensus centers: score hypothesis centers
by inlier count, refine the best by two mean iterations, claim its inliers,
repeat until no model has enough support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlation_structure import EmbeddedModel
from .image_core import BinaryMap

RANSAC_SIGMA = 20.0  # vote radius, roughly two thirds of the object size
MIN_SUPPORT = 2
# Exhaustive hypothesis scan below this many votes; sampled above.
MAX_EXHAUSTIVE_HYPOTHESES = 5000


@dataclass(frozen=True)
class Vote:
    patch_id: int
    center: tuple[float, float]  # implied object center (row, col)
    hit: tuple[int, int]  # occurrence-map pixel that cast the vote


@dataclass(frozen=True)
class Cluster:
    """One candidate occurrence: a consensus center and its member hits."""

    id: int
    center: tuple[float, float]
    members: tuple[tuple[int, tuple[float, float]], ...]  # (patch_id, hit)

    @property
    def patch_ids(self) -> tuple[int, ...]:
        return tuple(pid for pid, _ in self.members)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "cx": self.center[1],
            "cy": self.center[0],
            "members": [{"patch": pid, "x": hit[1], "y": hit[0]} for pid, hit in self.members],
        }


def collect_votes(model: EmbeddedModel, occurrences: dict[int, BinaryMap]) -> list[Vote]:
    """One vote per set pixel per embedded patch; off-image centers are kept."""
    votes: list[Vote] = []
    for pid in sorted(model.coordinates):
        if pid not in occurrences:
            continue
        x = model.coordinates[pid]
        for r, c in occurrences[pid].points():
            votes.append(
                Vote(
                    patch_id=pid,
                    center=(float(r) - float(x[0]), float(c) - float(x[1])),
                    hit=(int(r), int(c)),
                )
            )
    return votes


def ransac_cluster(
    votes: list[Vote],
    sigma: float = RANSAC_SIGMA,
    min_support: int = MIN_SUPPORT,
    rng_seed: int = 0,
) -> list[Cluster]:
    """Greedy multi-model consensus clustering of vote centers.

    Each round scores candidate centers by the number of unclaimed votes in
    the tight sigma/2 ball, refines the best candidate twice by the mean of
    those votes, and claims that ball. The tight radius is deliberate: with
    adjacent objects roughly one sigma apart, full-radius scoring prefers
    midpoints between two objects (double support), the refinement mean
    drifts there, and full-radius claims strip sparsely-voted neighbors
    below the support floor. Objects closer than the tight ball still
    merge, which is the documented limitation. A cluster keeps one member
    per patch id (the claimed vote closest to the center wins).
    """
    if not votes:
        return []
    rng = np.random.default_rng(rng_seed)
    centers = np.array([v.center for v in votes])
    active = np.ones(len(votes), dtype=bool)
    clusters: list[Cluster] = []
    tight = sigma / 2.0

    while active.sum() >= min_support:
        idx = np.nonzero(active)[0]
        pts = centers[idx]
        if len(idx) <= MAX_EXHAUSTIVE_HYPOTHESES:
            hyp = pts
        else:
            hyp = pts[rng.choice(len(idx), size=MAX_EXHAUSTIVE_HYPOTHESES, replace=False)]
        # Inlier counts for every hypothesis against every active vote.
        d2 = ((hyp[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        support = (d2 <= tight**2).sum(axis=1)
        best = int(np.argmax(support))
        center = hyp[best]
        for _ in range(2):
            near = ((pts - center) ** 2).sum(axis=1) <= tight**2
            if not near.any():
                break
            center = pts[near].mean(axis=0)
        inl = ((pts - center) ** 2).sum(axis=1) <= tight**2
        if int(inl.sum()) < min_support:
            break
        claimed = idx[inl]
        members: dict[int, tuple[float, tuple[float, float]]] = {}
        for vi in claimed:
            v = votes[vi]
            dist = float(np.hypot(v.center[0] - center[0], v.center[1] - center[1]))
            if v.patch_id not in members or dist < members[v.patch_id][0]:
                members[v.patch_id] = (dist, (float(v.hit[0]), float(v.hit[1])))
        clusters.append(
            Cluster(
                id=len(clusters),
                center=(float(center[0]), float(center[1])),
                members=tuple((pid, hit) for pid, (_, hit) in sorted(members.items())),
            )
        )
        active[claimed] = False
    return clusters
