"""Linear occurrence classification with query-based active learning.

The separator starts as "count patches" (w = e1 over z-scored features); the
operator picks an initial bias with a slider over 20 score-uniform clusters,
then answers rounds of 20 marginal queries (7 near / 3 far per side). After
each round the soft-margin SVM is retrained on all user labels plus the
auto-labeled far tails, and the margins delta+/- adapt by factors of two.
The "user" can be a human behind the HTTP service or a ground-truth oracle.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    IncompleteResponse,
    InsufficientClusters,
    SingleClass,
    TooFewClusters,
    WrongPhase,
)

SVM_C = 10.0
SVM_MAX_ITER = 10_000
SVM_TOL = 1e-6
BIAS_EPS = 1e-6
ROUND_CAP = 25
NEAR_QUOTA = 7
FAR_QUOTA = 3
SLIDER_SIZE = 20
MIN_BATCH = 4


@dataclass(frozen=True)
class Separator:
    """Decision rule sign(<w, f> - b)."""

    w: np.ndarray
    b: float

    def scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.w

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.scores(features) > self.b


def hinge_loss(sep: Separator, features: np.ndarray, labels: np.ndarray) -> float:
    y = np.where(labels, 1.0, -1.0)
    margins = y * (sep.scores(features) - sep.b)
    return float(np.maximum(0.0, 1.0 - margins).sum())


def svm_objective(sep: Separator, features: np.ndarray, labels: np.ndarray, C: float = SVM_C) -> float:
    return 0.5 * float(sep.w @ sep.w) + C * hinge_loss(sep, features, labels)


def train_soft_svm(points: np.ndarray, labels: np.ndarray, C: float = SVM_C) -> Separator:
    """Soft-margin linear SVM by deterministic maximal-violating-pair SMO.

    Solves the dual of min 1/2 ||w||^2 + C sum hinge(y (<w,x> - b)) with a
    fixed iteration budget; ties in working-set selection break by index,
    so retraining is reproducible.
    """
    X = np.asarray(points, dtype=float)
    y = np.where(np.asarray(labels, dtype=bool), 1.0, -1.0)
    if len(np.unique(y)) < 2:
        raise SingleClass("training set must contain both labels")
    m = len(y)
    alpha = np.zeros(m)
    grad = -np.ones(m)  # G = Q alpha - e
    diag = np.einsum("ij,ij->i", X, X)

    for _ in range(SVM_MAX_ITER):
        up = ((alpha < C - 1e-12) & (y > 0)) | ((alpha > 1e-12) & (y < 0))
        low = ((alpha < C - 1e-12) & (y < 0)) | ((alpha > 1e-12) & (y > 0))
        if not up.any() or not low.any():
            break
        neg_yg = -y * grad
        i = int(np.flatnonzero(up)[np.argmax(neg_yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(neg_yg[low])])
        if neg_yg[i] - neg_yg[j] < SVM_TOL:
            break
        kij = float(X[i] @ X[j])
        quad = max(diag[i] + diag[j] - 2.0 * kij, 1e-12)
        # Step in t = delta(y_i alpha_i) = -delta(y_j alpha_j).
        t = (neg_yg[i] - neg_yg[j]) / quad
        ti = y[i] * alpha[i]
        tj = y[j] * alpha[j]
        lo_i, hi_i = (0.0, C) if y[i] > 0 else (-C, 0.0)
        lo_j, hi_j = (0.0, C) if y[j] > 0 else (-C, 0.0)
        t = min(t, hi_i - ti, tj - lo_j)
        t = max(t, lo_i - ti, tj - hi_j)
        if t == 0.0:
            break
        d_alpha_i = y[i] * t
        d_alpha_j = -y[j] * t
        alpha[i] += d_alpha_i
        alpha[j] += d_alpha_j
        qi = y * (X @ X[i]) * y[i]
        qj = y * (X @ X[j]) * y[j]
        grad += qi * d_alpha_i + qj * d_alpha_j

    w = X.T @ (alpha * y)
    margins = X @ w  # decision without bias: y_i (margin_i + b_std) ~ 1
    free = (alpha > 1e-8) & (alpha < C - 1e-8)
    if free.any():
        b_std = float(np.mean(y[free] - margins[free]))
    else:
        # Bracket b_std by the KKT inequalities of the bound points.
        lo, hi = -np.inf, np.inf
        for k in range(m):
            bound = y[k] - margins[k]
            at_zero = alpha[k] <= 1e-8
            if (at_zero and y[k] > 0) or (not at_zero and y[k] < 0):
                lo = max(lo, bound) if np.isfinite(bound) else lo
            else:
                hi = min(hi, bound)
        if not np.isfinite(lo):
            lo = hi
        if not np.isfinite(hi):
            hi = lo
        b_std = float((lo + hi) / 2.0)
    return Separator(w=w, b=-b_std)


class Phase(str, Enum):
    SLIDER = "slider"
    QUERYING = "querying"
    CONVERGED = "converged"


@dataclass(frozen=True)
class QueryEntry:
    cluster_id: int
    score: float
    predicted: bool
    zone: str  # near+, far+, near-, far-, slider


@dataclass(frozen=True)
class QueryBatch:
    round_id: int
    entries: tuple[QueryEntry, ...]

    @property
    def cluster_ids(self) -> tuple[int, ...]:
        return tuple(e.cluster_id for e in self.entries)


@dataclass(frozen=True, eq=False)
class SessionState:
    """Immutable snapshot of the active-learning session."""

    features: np.ndarray  # (k, 18) normalized feature matrix
    separator: Separator
    b_min: float
    b_max: float
    delta_plus: float
    delta_minus: float
    user_labels: dict[int, bool]
    round: int
    phase: Phase
    pending: QueryBatch | None
    log: tuple[dict, ...]
    svm_c: float = SVM_C

    @property
    def n_clusters(self) -> int:
        return self.features.shape[0]

    def scores(self) -> np.ndarray:
        return self.separator.scores(self.features)


def _clamped_deltas(dp: float, dm: float, b: float, b_min: float, b_max: float):
    span = b_max - b_min
    dp = float(min(max(dp, 0.0), span, b_max - b))
    dm = float(min(max(dm, 0.0), span, b - b_min))
    return dp, dm


def init_session(features: np.ndarray, svm_c: float = SVM_C) -> SessionState:
    """Seed the session: w = e1 (patch count), full positive-negative bias range."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise TooFewClusters("need at least 2 clusters to run a session")
    w = np.zeros(features.shape[1])
    w[0] = 1.0
    scores = features @ w
    b_min = float(scores.min()) - BIAS_EPS
    b_max = float(scores.max()) + BIAS_EPS
    b = 0.5 * (b_min + b_max)
    return SessionState(
        features=features,
        separator=Separator(w=w, b=b),
        b_min=b_min,
        b_max=b_max,
        delta_plus=0.0,
        delta_minus=0.0,
        user_labels={},
        round=0,
        phase=Phase.SLIDER,
        pending=None,
        log=(),
        svm_c=svm_c,
    )


def slider_batch(state: SessionState) -> QueryBatch:
    """Up to 20 clusters whose scores uniformly sample [b_min, b_max]."""
    if state.phase is not Phase.SLIDER:
        raise WrongPhase(f"slider batch requested in phase {state.phase.value}")
    scores = state.scores()
    order = np.argsort(scores, kind="stable")
    chosen: list[int] = []
    taken = set()
    for target in np.linspace(state.b_min, state.b_max, min(SLIDER_SIZE, len(scores))):
        best, best_d = -1, np.inf
        for idx in order:
            if int(idx) in taken:
                continue
            d = abs(scores[idx] - target)
            if d < best_d:
                best, best_d = int(idx), d
        chosen.append(best)
        taken.add(best)
    entries = tuple(
        QueryEntry(
            cluster_id=cid,
            score=float(scores[cid]),
            predicted=bool(scores[cid] > state.separator.b),
            zone="slider",
        )
        for cid in chosen
    )
    return QueryBatch(round_id=state.round, entries=entries)


def set_bias(state: SessionState, b: float) -> SessionState:
    """Record the slider choice and open the querying phase."""
    if state.phase is not Phase.SLIDER:
        raise WrongPhase(f"set_bias in phase {state.phase.value}")
    b = float(min(max(b, state.b_min), state.b_max))
    delta = min(abs(b - state.b_min), abs(b - state.b_max))
    dp, dm = _clamped_deltas(delta, delta, b, state.b_min, state.b_max)
    record = {"event": "bias", "b": b, "delta_plus": dp, "delta_minus": dm}
    return dataclasses.replace(
        state,
        separator=Separator(w=state.separator.w, b=b),
        delta_plus=dp,
        delta_minus=dm,
        phase=Phase.QUERYING,
        log=state.log + (record,),
    )


def _zone_members(state: SessionState) -> dict[str, list[int]]:
    scores = state.scores()
    b = state.separator.b
    dp, dm = state.delta_plus, state.delta_minus
    zones: dict[str, list[int]] = {"near+": [], "far+": [], "near-": [], "far-": []}
    for idx in range(len(scores)):
        if idx in state.user_labels:
            continue
        s = scores[idx]
        if b < s <= b + dp / 2:
            zones["near+"].append(idx)
        elif b + dp / 2 < s <= b + dp:
            zones["far+"].append(idx)
        elif b - dm / 2 <= s <= b:
            zones["near-"].append(idx)
        elif b - dm <= s < b - dm / 2:
            zones["far-"].append(idx)
    return zones


def next_query_batch(state: SessionState, rng_seed: int) -> tuple[SessionState, QueryBatch | None]:
    """Sample the next 7/3/7/3 batch; None plus a converged state when the
    margin zones cannot supply at least 4 clusters."""
    if state.phase is not Phase.QUERYING:
        raise WrongPhase(f"query batch in phase {state.phase.value}")
    if state.pending is not None:
        return state, state.pending
    rng = np.random.default_rng(rng_seed)
    zones = _zone_members(state)
    quotas = (("near+", NEAR_QUOTA), ("far+", FAR_QUOTA), ("near-", NEAR_QUOTA), ("far-", FAR_QUOTA))
    picked: list[tuple[int, str]] = []
    for zone, quota in quotas:
        members = zones[zone]
        take = min(quota, len(members))
        if take == 0:
            continue
        sel = rng.choice(len(members), size=take, replace=False)
        picked.extend((members[int(s)], zone) for s in sorted(sel))
    if len(picked) < MIN_BATCH:
        return dataclasses.replace(state, phase=Phase.CONVERGED), None
    scores = state.scores()
    entries = tuple(
        QueryEntry(
            cluster_id=cid,
            score=float(scores[cid]),
            predicted=bool(scores[cid] > state.separator.b),
            zone=zone,
        )
        for cid, zone in picked
    )
    batch = QueryBatch(round_id=state.round, entries=entries)
    return dataclasses.replace(state, pending=batch), batch


def apply_corrections(state: SessionState, responses: dict[int, bool]) -> SessionState:
    """Fold a full batch of labels back in: retrain, adapt deltas, converge.

    The training set is every accumulated user label plus auto-labels for
    clusters outside [b - delta-, b + delta+]; user labels always win. A
    round with zero corrections (or the round cap) converges the session.
    """
    if state.phase is not Phase.QUERYING or state.pending is None:
        raise WrongPhase("no pending batch to correct")
    batch = state.pending
    if set(responses) != set(batch.cluster_ids):
        raise IncompleteResponse(
            f"responses cover {sorted(responses)} but batch is {sorted(batch.cluster_ids)}"
        )
    corrected = [e.cluster_id for e in batch.entries if responses[e.cluster_id] != e.predicted]
    far_plus_changed = any(
        responses[e.cluster_id] != e.predicted for e in batch.entries if e.zone == "far+"
    )
    far_minus_changed = any(
        responses[e.cluster_id] != e.predicted for e in batch.entries if e.zone == "far-"
    )

    user_labels = dict(state.user_labels)
    user_labels.update({int(k): bool(v) for k, v in responses.items()})

    scores = state.scores()
    b, dp, dm = state.separator.b, state.delta_plus, state.delta_minus
    train_ids: list[int] = []
    train_labels: list[bool] = []
    for idx in range(state.n_clusters):
        if idx in user_labels:
            train_ids.append(idx)
            train_labels.append(user_labels[idx])
        elif scores[idx] > b + dp:
            train_ids.append(idx)
            train_labels.append(True)
        elif scores[idx] < b - dm:
            train_ids.append(idx)
            train_labels.append(False)

    labels_arr = np.array(train_labels, dtype=bool)
    if labels_arr.all() or not labels_arr.any():
        separator = state.separator  # cannot retrain on one class
    else:
        separator = train_soft_svm(state.features[train_ids], labels_arr, C=state.svm_c)

    new_scores = separator.scores(state.features)
    b_min = float(new_scores.min()) - BIAS_EPS
    b_max = float(new_scores.max()) + BIAS_EPS
    new_b = float(min(max(separator.b, b_min), b_max))
    separator = Separator(w=separator.w, b=new_b)
    dp = dp * 2.0 if far_plus_changed else dp / 2.0
    dm = dm * 2.0 if far_minus_changed else dm / 2.0
    dp, dm = _clamped_deltas(dp, dm, new_b, b_min, b_max)

    new_round = state.round + 1
    phase = Phase.CONVERGED if (not corrected or new_round >= ROUND_CAP) else Phase.QUERYING
    record = {
        "round": state.round,
        "batch": list(batch.cluster_ids),
        "corrections": sorted(corrected),
        "w": [float(v) for v in separator.w],
        "b": float(separator.b),
        "delta_plus": dp,
        "delta_minus": dm,
    }
    return dataclasses.replace(
        state,
        separator=separator,
        b_min=b_min,
        b_max=b_max,
        delta_plus=dp,
        delta_minus=dm,
        user_labels=user_labels,
        round=new_round,
        phase=phase,
        pending=None,
        log=state.log + (record,),
    )


def classify_all(state: SessionState, features: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Labels for every cluster (user labels override) and the positive count."""
    feats = state.features if features is None else np.asarray(features, dtype=float)
    labels = feats @ state.separator.w > state.separator.b
    if features is None or feats.shape[0] == state.n_clusters:
        for cid, lab in state.user_labels.items():
            labels[cid] = lab
    return labels, int(labels.sum())


def session_round_seed(base_seed: int, round_id: int) -> int:
    """Stable per-round seed derivation."""
    return int(np.random.SeedSequence([base_seed, round_id]).generate_state(1)[0])


def pick_slider_bias(
    batch: QueryBatch,
    oracle: dict[int, bool] | np.ndarray,
    b_min: float,
    b_max: float,
    slack: int = 3,
) -> float:
    """Slider threshold that matches oracle labels on the shown batch.

    Among cuts within ``slack`` errors of the best one, the most central
    cut (largest distance to the nearer end of the bias range) wins. The
    slack matters when the initial score cannot separate the batch: the
    strictly best cut is then often an extreme that would zero out the
    query margins, poison the auto-labeled tails, and end the session
    before the classifier learned anything, whereas a human leaves the
    slider in the confusion zone.
    """
    entries = sorted(batch.entries, key=lambda e: e.score)
    scores = [e.score for e in entries]
    labels = [bool(oracle[e.cluster_id]) for e in entries]
    cuts = [0.5 * (b_min + scores[0])]
    cuts += [0.5 * (scores[k] + scores[k + 1]) for k in range(len(scores) - 1)]
    cuts += [0.5 * (scores[-1] + b_max)]
    errors = [sum(1 for s, lab in zip(scores, labels) if (s > b) != lab) for b in cuts]
    floor = min(errors) + slack
    best_b, best_depth = None, -np.inf
    for b, err in zip(cuts, errors):
        if err > floor:
            continue
        depth = min(b - b_min, b_max - b)
        if depth > best_depth + 1e-12:
            best_b, best_depth = b, depth
    return float(best_b)


@dataclass
class OracleSessionResult:
    state: SessionState
    clicks: int
    rounds: int
    disagreements: list[int]  # oracle disagreement count per round


def run_oracle_session(
    features: np.ndarray, oracle, rng_seed: int, svm_c: float = SVM_C
) -> OracleSessionResult:
    """Drive a full session with ground-truth answers standing in for the user."""
    oracle = np.asarray(oracle, dtype=bool)
    state = init_session(features, svm_c=svm_c)
    state = set_bias(
        state, pick_slider_bias(slider_batch(state), oracle, state.b_min, state.b_max)
    )
    clicks = 0
    disagreements: list[int] = []
    while state.phase is Phase.QUERYING:
        state, batch = next_query_batch(state, session_round_seed(rng_seed, state.round))
        if batch is None:
            break
        responses = {e.cluster_id: bool(oracle[e.cluster_id]) for e in batch.entries}
        clicks += sum(1 for e in batch.entries if responses[e.cluster_id] != e.predicted)
        state = apply_corrections(state, responses)
        labels, _ = classify_all(state)
        disagreements.append(int((labels != oracle).sum()))
    return OracleSessionResult(
        state=state, clicks=clicks, rounds=state.round, disagreements=disagreements
    )


def write_session_log(state: SessionState, path) -> None:
    """One JSON record per session event (replayable audit trail)."""
    lines = [json.dumps(rec, sort_keys=True) for rec in state.log]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
