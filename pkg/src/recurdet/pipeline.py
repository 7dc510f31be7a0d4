"""End-to-end orchestration: detect, count, benchmark.

A run rescales the image so the boxed object spans the canonical size,
mines recurrent patches, recovers the part model from occurrence-map
correlations, clusters votes into candidate occurrences, extracts the 18-d
descriptors, and classifies them either through a ground-truth oracle
session or with the initial separator at the midpoint bias. All randomness
derives from one seed; stage wall times go to the log, never into reports,
so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import (
    OracleSessionResult,
    Phase,
    classify_all,
    init_session,
    run_oracle_session,
    set_bias,
    write_session_log,
)
from .correlation_structure import (
    EmbeddedModel,
    PatchGraph,
    build_patch_graph,
    correct_edge_patch,
    embed,
    model_to_json,
    prune_graph,
    ridge_fit,
)
from .detection import Cluster, collect_votes, ransac_cluster
from .errors import ConfigError, PipelineError, TooFewClusters
from .features import (
    FEATURE_DIM,
    FeatureContext,
    export_feature_csv,
    feature_matrix,
    zscore_normalize,
)
from .image_core import (
    BinaryMap,
    CorrelationMap,
    GrayImage,
    NccEngine,
    load_image,
    non_max_suppress,
)
from .patch_mining import MiningConfig, mine_recurrent_patches, rescale_to_canonical
from .synth import GroundTruth

log = logging.getLogger("recurdet")

_CONFIG_KEYS = {
    "epsilon",
    "patch_side",
    "candidates_per_round",
    "stop_fraction",
    "variance_floor",
    "ratio_threshold",
    "eccentricity_gate",
    "sigma_ransac",
    "min_support",
    "bins",
    "svm_c",
    "seed",
}


@dataclass(frozen=True)
class PipelineConfig:
    epsilon: float = 1 / 20
    patch_side: int = 9
    candidates_per_round: int = 30
    stop_fraction: float = 0.30
    variance_floor: float = 1e-3
    ratio_threshold: float = 2.0
    eccentricity_gate: float = 2.0
    sigma_ransac: float | None = None  # None: 20 for the canonical size, else 0.74 * object
    min_support: int = 2
    bins: int = 8
    svm_c: float = 10.0
    seed: int = 0

    def __post_init__(self):
        # MiningConfig validates its own slice of the knobs.
        self.mining(0)
        if self.ratio_threshold <= 1:
            raise ConfigError("ratio_threshold must exceed 1")
        if self.min_support < 1:
            raise ConfigError("min_support must be at least 1")

    @property
    def object_size(self) -> int:
        return 3 * self.patch_side

    @property
    def sigma(self) -> float:
        if self.sigma_ransac is not None:
            return self.sigma_ransac
        # Literal paper value at the canonical size, relative rule otherwise.
        return 20.0 if self.object_size == 27 else float(np.ceil(0.74 * self.object_size))

    def mining(self, rng_seed: int) -> MiningConfig:
        return MiningConfig(
            epsilon=self.epsilon,
            patch_side=self.patch_side,
            candidates_per_round=self.candidates_per_round,
            stop_fraction=self.stop_fraction,
            variance_floor=self.variance_floor,
            rng_seed=rng_seed,
        )

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def derive_seeds(seed: int) -> dict[str, int]:
    """Fixed splitting of the run seed into per-stage seeds."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("mining", "ransac", "session")
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


@dataclass(frozen=True, eq=False)
class PipelineArtifacts:
    image: GrayImage  # rescaled working image
    scale: float
    patches: list
    correlation: dict[int, CorrelationMap]
    occurrences: dict[int, BinaryMap]
    corrected_ids: tuple[int, ...]
    graph: PatchGraph
    model: EmbeddedModel
    clusters: list[Cluster]
    context: FeatureContext
    features_raw: np.ndarray
    features_norm: np.ndarray
    timings: dict[str, float]


def _stage(name: str, fn, timings: dict[str, float]):
    start = time.perf_counter()
    try:
        result = fn()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc
    timings[name] = time.perf_counter() - start
    log.info("stage %-10s %.3fs", name, timings[name])
    return result


def run_pipeline(img: GrayImage, bbox, config: PipelineConfig) -> PipelineArtifacts:
    """Run everything up to (and including) feature extraction."""
    seeds = derive_seeds(config.seed)
    timings: dict[str, float] = {}

    work, scale = _stage(
        "rescale", lambda: rescale_to_canonical(img, bbox, config.mining(0)), timings
    )
    mining_cfg = config.mining(seeds["mining"])
    patches = _stage("mining", lambda: mine_recurrent_patches(work, mining_cfg), timings)
    log.info("mined %d patches, frequencies %s", len(patches), [p.frequency for p in patches])

    def structure():
        engine = NccEngine(work, config.patch_side)
        correlation: dict[int, CorrelationMap] = {}
        occurrences: dict[int, BinaryMap] = {}
        corrected = []
        for p in patches:
            rho = engine.map(p.patch)
            correlation[p.id] = rho
            fit = ridge_fit(rho, config.object_size)
            if fit.eccentricity > config.eccentricity_gate:
                occurrences[p.id] = correct_edge_patch(rho, mining_cfg)
                corrected.append(p.id)
            else:
                occurrences[p.id] = non_max_suppress(
                    rho, 1.0 - config.epsilon, config.patch_side
                )
        graph = build_patch_graph(
            occurrences, config.ratio_threshold, max_lag=2 * config.object_size
        )
        pruned = prune_graph(graph, n=len(patches))
        model = embed(pruned)
        return correlation, occurrences, tuple(corrected), pruned, model

    correlation, occurrences, corrected_ids, graph, model = _stage(
        "structure", structure, timings
    )
    log.info(
        "graph: %d vertices, %d edges, %d components (%d edge-corrected)",
        len(graph.vertices),
        len(graph.edges),
        len(model.components),
        len(corrected_ids),
    )

    def detect():
        votes = collect_votes(
            model, {pid: occurrences[pid] for pid in model.coordinates}
        )
        return ransac_cluster(
            votes,
            sigma=config.sigma,
            min_support=config.min_support,
            rng_seed=seeds["ransac"],
        )

    clusters = _stage("detection", detect, timings)
    log.info("%d candidate clusters", len(clusters))

    def featurize():
        context = FeatureContext(
            clusters=clusters,
            graph=graph,
            model=model,
            correlation=correlation,
            image_shape=(work.height, work.width),
            object_size=config.object_size,
            bins=config.bins,
        )
        raw = feature_matrix(context)
        norm, _, _ = zscore_normalize(raw) if len(raw) else (raw, None, None)
        return context, raw, norm

    context, raw, norm = _stage("features", featurize, timings)

    return PipelineArtifacts(
        image=work,
        scale=scale,
        patches=patches,
        correlation=correlation,
        occurrences=occurrences,
        corrected_ids=corrected_ids,
        graph=graph,
        model=model,
        clusters=clusters,
        context=context,
        features_raw=raw,
        features_norm=norm,
        timings=timings,
    )


def oracle_cluster_labels(
    clusters: list[Cluster], truth: GroundTruth, scale: float, tol: float | None = None
) -> np.ndarray:
    """Ground-truth labels: greedy one-to-one match to target centers.

    Cluster centers are mapped back to original image coordinates; a
    cluster is positive iff it wins a target center within ``tol``
    (default: half the object size, in original pixels).
    """
    if tol is None:
        tol = truth.object_size / 2.0
    targets = truth.target_centers
    labels = np.zeros(len(clusters), dtype=bool)
    pairs = []
    for ci, cluster in enumerate(clusters):
        center = np.array(cluster.center) / scale
        d = np.hypot(*(targets - center).T)
        for ti in np.nonzero(d <= tol)[0]:
            pairs.append((float(d[ti]), int(ti), ci))
    pairs.sort()
    used_t: set[int] = set()
    used_c: set[int] = set()
    for _, ti, ci in pairs:
        if ti in used_t or ci in used_c:
            continue
        used_t.add(ti)
        used_c.add(ci)
        labels[ci] = True
    return labels


@dataclass(frozen=True, eq=False)
class DetectResult:
    report: dict
    artifacts: PipelineArtifacts
    session_state: object  # SessionState
    oracle: np.ndarray | None


def _session_for(artifacts: PipelineArtifacts, config: PipelineConfig, oracle):
    seeds = derive_seeds(config.seed)
    if oracle is not None:
        result = run_oracle_session(
            artifacts.features_norm, oracle, rng_seed=seeds["session"], svm_c=config.svm_c
        )
        return result.state, result.clicks, result.rounds
    state = init_session(artifacts.features_norm, svm_c=config.svm_c)
    state = set_bias(state, 0.5 * (state.b_min + state.b_max))
    return state, 0, 0


def run_detect(
    image_path,
    bbox,
    config: PipelineConfig,
    oracle_path=None,
    out_path=None,
    log_path=None,
) -> DetectResult:
    """Full detection run on an image file; returns the JSON-ready report.

    With an oracle file (scene ground truth) the classifier session is
    driven to convergence by true labels; without one the report carries
    the initial separator's split at the midpoint bias.
    """
    img = load_image(image_path)
    artifacts = run_pipeline(img, bbox, config)
    if len(artifacts.clusters) < 2:
        raise PipelineError("classify", TooFewClusters(f"{len(artifacts.clusters)} clusters"))

    oracle = None
    truth = None
    if oracle_path is not None:
        truth = GroundTruth.from_json(json.loads(Path(oracle_path).read_text()))
        oracle = oracle_cluster_labels(artifacts.clusters, truth, artifacts.scale)

    try:
        state, clicks, rounds = _session_for(artifacts, config, oracle)
        labels, count = classify_all(state)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("classify", exc) from exc

    scores = state.separator.scores(artifacts.features_norm) - state.separator.b
    detections = [
        {
            "x": float(c.center[1] / artifacts.scale),
            "y": float(c.center[0] / artifacts.scale),
            "score": float(scores[c.id]),
            "label": "positive" if labels[c.id] else "negative",
        }
        for c in artifacts.clusters
    ]
    report = {
        "count": int(count),
        "detections": detections,
        "model": {
            "n_patches": len(artifacts.patches),
            "n_vertices": len(artifacts.graph.vertices),
            "n_edges": len(artifacts.graph.edges),
            "n_components": len(artifacts.model.components),
            "edge_corrected": list(artifacts.corrected_ids),
        },
        "n_clusters": len(artifacts.clusters),
        "session": {
            "mode": "oracle" if oracle is not None else "unattended",
            "converged": state.phase is Phase.CONVERGED,
            "rounds": int(rounds),
            "clicks": int(clicks),
        },
        "scale": float(artifacts.scale),
        "seed": int(config.seed),
    }
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=1) + "\n")
    if log_path is not None:
        write_session_log(state, log_path)
    return DetectResult(report=report, artifacts=artifacts, session_state=state, oracle=oracle)


def export_model(artifacts: PipelineArtifacts, path) -> None:
    patches = {p.id: p.patch for p in artifacts.patches if p.id in artifacts.model.coordinates}
    Path(path).write_text(json.dumps(model_to_json(artifacts.model, patches)))


def export_features(artifacts: PipelineArtifacts, path) -> None:
    export_feature_csv(artifacts.clusters, artifacts.features_raw, path)


def _bench_one(entry: dict, config_doc: dict, manifest_dir: str) -> dict:
    """Worker: one scene end to end (runs in a subprocess)."""
    base = Path(manifest_dir)
    config = PipelineConfig.from_json(config_doc)
    truth_doc = json.loads((base / entry["truth"]).read_text())
    truth = GroundTruth.from_json(truth_doc)
    started = time.perf_counter()
    try:
        result = run_detect(
            base / entry["image"], tuple(truth.bbox), config, oracle_path=base / entry["truth"]
        )
    except PipelineError as exc:
        return {"scene": entry["image"], "error": str(exc), "stage": exc.stage}
    elapsed = time.perf_counter() - started
    from .synth import score_detections

    positives = np.array(
        [
            [d["y"], d["x"]]
            for d in result.report["detections"]
            if d["label"] == "positive"
        ]
    ).reshape(-1, 2)
    score = score_detections(positives, truth.target_centers, tol=truth.object_size / 2.0)
    return {
        "scene": entry["image"],
        "count": result.report["count"],
        "true_count": len(truth.target_centers),
        "count_error": score.count_error,
        "false_pos": score.false_pos,
        "false_neg": score.false_neg,
        "f1": score.f1,
        "rounds": result.report["session"]["rounds"],
        "clicks": result.report["session"]["clicks"],
        "converged": result.report["session"]["converged"],
        "wall_time": elapsed,
    }


def run_benchmark(manifest_path, config: PipelineConfig, out_dir, jobs: int | None = None) -> dict:
    """Oracle-driven runs over every scene in a manifest.

    Scenes run in parallel; results keep manifest order. Metrics (CSV and
    JSON) are deterministic; wall times go to a separate timings file.
    """
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    scenes = manifest["scenes"]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_doc = dataclasses.asdict(config)

    if jobs is None:
        jobs = min(4, len(scenes)) or 1
    if jobs > 1 and len(scenes) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(
                    _bench_one,
                    scenes,
                    [config_doc] * len(scenes),
                    [str(manifest_path.parent)] * len(scenes),
                )
            )
    else:
        rows = [_bench_one(s, config_doc, str(manifest_path.parent)) for s in scenes]

    ok = [r for r in rows if "error" not in r]
    errors = np.array([r["count_error"] for r in ok], dtype=float)
    summary = {
        "scenes": len(rows),
        "failed": len(rows) - len(ok),
        "mean_count_error": float(errors.mean()) if len(ok) else None,
        "std_count_error": float(errors.std()) if len(ok) else None,
        "mean_false_pos": float(np.mean([r["false_pos"] for r in ok])) if ok else None,
        "mean_false_neg": float(np.mean([r["false_neg"] for r in ok])) if ok else None,
        "mean_clicks": float(np.mean([r["clicks"] for r in ok])) if ok else None,
        "max_rounds": int(max((r["rounds"] for r in ok), default=0)),
    }
    doc = {
        "summary": summary,
        "scenes": [{k: v for k, v in r.items() if k != "wall_time"} for r in rows],
    }
    (out_dir / "bench.json").write_text(json.dumps(doc, indent=1) + "\n")

    fields = [
        "scene",
        "count",
        "true_count",
        "count_error",
        "false_pos",
        "false_neg",
        "f1",
        "rounds",
        "clicks",
        "converged",
    ]
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for r in ok:
            writer.writerow(r)
    with open(out_dir / "timings.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scene", "wall_time"], extrasaction="ignore")
        writer.writeheader()
        for r in ok:
            writer.writerow(r)
    return doc
