"""Per-cluster occurrence descriptors.

Each candidate cluster gets an 18-dimensional feature vector: nine base
fidelity measures (member count, mean correlation, deformation, centroid
offset, border proximity, angular-bin occupancy, three patch-composition
PCA projections) and nine occlusion-sampled counterparts gathered by
shooting rays through the cluster's empty angular bins into feature maps
rendered from the other clusters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correlation_structure import EmbeddedModel, PatchGraph
from .detection import Cluster
from .errors import EmptyCluster
from .image_core import CorrelationMap

BIN_COUNT = 8
FEATURE_DIM = 18

FEATURE_NAMES = (
    "patch_count",
    "mean_correlation",
    "mean_deformation",
    "centroid_offset",
    "border_proximity",
    "angular_occupancy",
    "pca_1",
    "pca_2",
    "pca_3",
    "occl_patch_count",
    "occl_mean_correlation",
    "occl_mean_deformation",
    "occl_centroid_offset",
    "occl_border_proximity",
    "occl_angular_occupancy",
    "occl_pca_1",
    "occl_pca_2",
    "occl_pca_3",
)


def mean_correlation(cluster: Cluster, correlation: dict[int, CorrelationMap]) -> float:
    """Average correlation score at the member hits, clamped at 0."""
    if not cluster.members:
        raise EmptyCluster(f"cluster {cluster.id} has no members")
    vals = []
    for pid, (hr, hc) in cluster.members:
        rho = correlation[pid].data
        r, c = int(round(hr)), int(round(hc))
        r = min(max(r, 0), rho.shape[0] - 1)
        c = min(max(c, 0), rho.shape[1] - 1)
        vals.append(max(float(rho[r, c]), 0.0))
    return float(np.mean(vals))


def mean_deformation(cluster: Cluster, g: PatchGraph) -> float:
    """Average offset misfit over member pairs joined by a graph edge.

    For members a, b with edge offset o_ab (the model displacement from
    a-hits to b-hits) the misfit is ||(y_b - y_a) - o_ab||; clusters with
    no connected pair score 0.
    """
    members = cluster.members
    total = 0.0
    pairs = 0
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            pid_a, hit_a = members[a]
            pid_b, hit_b = members[b]
            o = g.offset(pid_a, pid_b)
            if o is None:
                continue
            d = np.array(hit_b) - np.array(hit_a) - o
            total += float(np.hypot(*d))
            pairs += 1
    return total / pairs if pairs else 0.0


def centroid_offset(cluster: Cluster) -> float:
    """Distance from the member-hit centroid to the cluster center.

    Vanishes when all parts participate (the embedding is zero-mean per
    component), grows when one side of the object is missing.
    """
    if not cluster.members:
        raise EmptyCluster(f"cluster {cluster.id} has no members")
    hits = np.array([hit for _, hit in cluster.members])
    return float(np.hypot(*(hits.mean(axis=0) - np.array(cluster.center))))


def member_angles(cluster: Cluster) -> np.ndarray:
    hits = np.array([hit for _, hit in cluster.members], dtype=float)
    rel = hits - np.array(cluster.center)
    return np.arctan2(rel[:, 0], rel[:, 1])


def angular_occupancy(cluster: Cluster, bins: int = BIN_COUNT) -> tuple[int, list[int]]:
    """Occupied-bin count and the list of empty bin ids.

    Members are binned by the angle of their hit relative to the cluster
    center; a member exactly at the center falls into bin 0.
    """
    if not cluster.members:
        raise EmptyCluster(f"cluster {cluster.id} has no members")
    hits = np.array([hit for _, hit in cluster.members], dtype=float)
    rel = hits - np.array(cluster.center)
    occupied: set[int] = set()
    for dr, dc in rel:
        if abs(dr) < 1e-9 and abs(dc) < 1e-9:
            occupied.add(0)
            continue
        theta = float(np.arctan2(dr, dc)) % (2 * np.pi)
        occupied.add(int(theta / (2 * np.pi / bins)) % bins)
    empty = [b for b in range(bins) if b not in occupied]
    return len(occupied), empty


def border_proximity(center, image_shape, object_radius: float) -> float:
    """How deep the object's circle is clipped by the image border.

    0 for interior clusters; approaches ``object_radius`` as the center
    reaches the border (and is clamped there for off-frame centers).
    """
    h, w = image_shape
    r, c = center
    dist = min(r, c, h - 1 - r, w - 1 - c)
    return float(min(max(object_radius - dist, 0.0), object_radius))


@dataclass(frozen=True, eq=False)
class CompositionBasis:
    """Top patch-composition directions; rows are unit vectors."""

    vectors: np.ndarray  # (3, n)
    mean: np.ndarray  # (n,) mean indicator vector, used to center projections
    degenerate: bool  # true when padded (too few clusters or directions)


def indicator_matrix(clusters: list[Cluster], patch_ids: list[int]) -> np.ndarray:
    col = {pid: k for k, pid in enumerate(patch_ids)}
    v = np.zeros((len(clusters), len(patch_ids)))
    for row, cluster in enumerate(clusters):
        for pid in cluster.patch_ids:
            if pid in col:
                v[row, col[pid]] = 1.0
    return v


def composition_basis(clusters: list[Cluster], patch_ids: list[int]) -> CompositionBasis:
    """PCA of the patch-participation indicator vectors, top 3 directions.

    With fewer than 3 clusters (or fewer informative directions) the basis
    is padded with zero rows and flagged degenerate.
    """
    n = len(patch_ids)
    v = indicator_matrix(clusters, patch_ids)
    mean = v.mean(axis=0) if len(clusters) else np.zeros(n)
    degenerate = len(clusters) < 3
    vectors = np.zeros((3, n))
    if len(clusters) >= 2 and n >= 1:
        centered = v - mean
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        keep = min(3, vt.shape[0])
        for k in range(keep):
            if s[k] <= 1e-12:
                degenerate = True
                break
            row = vt[k]
            # Deterministic sign: largest-magnitude entry positive.
            if row[np.argmax(np.abs(row))] < 0:
                row = -row
            vectors[k] = row
        if keep < 3:
            degenerate = True
    return CompositionBasis(vectors=vectors, mean=mean, degenerate=degenerate)


def composition_projection(
    cluster: Cluster, basis: CompositionBasis, patch_ids: list[int]
) -> np.ndarray:
    v = indicator_matrix([cluster], patch_ids)[0] - basis.mean
    return basis.vectors @ v


@dataclass(frozen=True, eq=False)
class FeatureMaps:
    """Base features of every cluster painted over its object circle.

    Later clusters paint over earlier ones where circles overlap. Sampling
    can exclude one cluster's own rendering, which is what the occlusion
    rays need; ``render`` materializes the nine rasters.
    """

    centers: np.ndarray  # (k, 2)
    base: np.ndarray  # (k, 9)
    radius: float
    image_shape: tuple[int, int]

    def sample(self, point, exclude_id: int | None = None) -> np.ndarray:
        r, c = point
        h, w = self.image_shape
        if not (0 <= round(r) < h and 0 <= round(c) < w):
            return np.zeros(self.base.shape[1])
        d = np.hypot(self.centers[:, 0] - r, self.centers[:, 1] - c)
        inside = d <= self.radius
        if exclude_id is not None:
            inside[exclude_id] = False
        idx = np.nonzero(inside)[0]
        if len(idx) == 0:
            return np.zeros(self.base.shape[1])
        return self.base[idx[-1]].copy()  # painter's order: last id wins

    def render(self, exclude_id: int | None = None) -> np.ndarray:
        h, w = self.image_shape
        out = np.zeros((self.base.shape[1], h, w))
        rad = int(np.ceil(self.radius))
        for k in range(len(self.centers)):
            if k == exclude_id:
                continue
            cr, cc = self.centers[k]
            r0, r1 = max(int(cr) - rad, 0), min(int(cr) + rad + 1, h)
            c0, c1 = max(int(cc) - rad, 0), min(int(cc) + rad + 1, w)
            if r0 >= r1 or c0 >= c1:
                continue
            rr, cc_grid = np.mgrid[r0:r1, c0:c1]
            mask = (rr - cr) ** 2 + (cc_grid - cc) ** 2 <= self.radius**2
            for f in range(self.base.shape[1]):
                out[f, r0:r1, c0:c1][mask] = self.base[k, f]
        return out


def bin_ray_endpoint(center, bin_id: int, object_size: float, bins: int = BIN_COUNT):
    """Endpoint of the ray through a bin's bisector, one object size out."""
    theta = (bin_id + 0.5) * 2 * np.pi / bins
    return (
        center[0] + object_size * np.sin(theta),
        center[1] + object_size * np.cos(theta),
    )


def occlusion_features(
    cluster: Cluster,
    maps: FeatureMaps,
    empty_bins: list[int],
    object_size: float,
    bins: int = BIN_COUNT,
) -> np.ndarray:
    """Sum of feature-map samples at the empty-bin ray endpoints.

    The cluster's own rendering is excluded so the block reflects what
    sits beyond the missing parts, not the cluster itself.
    """
    total = np.zeros(maps.base.shape[1])
    for b in empty_bins:
        endpoint = bin_ray_endpoint(cluster.center, b, object_size, bins)
        total += maps.sample(endpoint, exclude_id=cluster.id)
    return total


class FeatureContext:
    """Everything feature extraction needs, plus the two global passes.

    The composition basis and the feature maps are computed once over all
    clusters; per-cluster vectors are then independent.
    """

    def __init__(
        self,
        clusters: list[Cluster],
        graph: PatchGraph,
        model: EmbeddedModel,
        correlation: dict[int, CorrelationMap],
        image_shape: tuple[int, int],
        object_size: int,
        bins: int = BIN_COUNT,
    ):
        self.clusters = clusters
        self.graph = graph
        self.model = model
        self.correlation = correlation
        self.image_shape = image_shape
        self.object_size = object_size
        self.bins = bins
        self.patch_ids = sorted(model.coordinates)
        self.basis = composition_basis(clusters, self.patch_ids)
        self._base: np.ndarray | None = None
        self._maps: FeatureMaps | None = None

    def base_features(self, cluster: Cluster) -> np.ndarray:
        out = np.empty(9)
        out[0] = len(cluster.members)
        out[1] = mean_correlation(cluster, self.correlation)
        out[2] = mean_deformation(cluster, self.graph)
        out[3] = centroid_offset(cluster)
        out[4] = border_proximity(cluster.center, self.image_shape, self.object_size / 2)
        occupied, _ = angular_occupancy(cluster, self.bins)
        out[5] = occupied
        out[6:9] = composition_projection(cluster, self.basis, self.patch_ids)
        return out

    @property
    def base_matrix(self) -> np.ndarray:
        if self._base is None:
            self._base = np.array([self.base_features(c) for c in self.clusters]).reshape(
                len(self.clusters), 9
            )
        return self._base

    @property
    def feature_maps(self) -> FeatureMaps:
        if self._maps is None:
            centers = np.array([c.center for c in self.clusters]).reshape(len(self.clusters), 2)
            self._maps = FeatureMaps(
                centers=centers,
                base=self.base_matrix,
                radius=self.object_size / 2,
                image_shape=self.image_shape,
            )
        return self._maps


def build_feature_vector(cluster: Cluster, context: FeatureContext) -> np.ndarray:
    """The full 18-dimensional descriptor for one cluster."""
    base = context.base_matrix[cluster.id]
    _, empty = angular_occupancy(cluster, context.bins)
    occl = occlusion_features(
        cluster, context.feature_maps, empty, context.object_size, context.bins
    )
    return np.concatenate([base, occl])


def feature_matrix(context: FeatureContext) -> np.ndarray:
    """Raw (unnormalized) k x 18 feature matrix over all clusters."""
    if not context.clusters:
        return np.zeros((0, FEATURE_DIM))
    return np.array([build_feature_vector(c, context) for c in context.clusters])


def zscore_normalize(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature standardization; constant columns become zero."""
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    safe = np.where(std > 1e-12, std, 1.0)
    return (matrix - mean) / safe, mean, std


def export_feature_csv(clusters: list[Cluster], matrix: np.ndarray, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("cluster",) + FEATURE_NAMES)
        for cluster, row in zip(clusters, matrix):
            writer.writerow([cluster.id] + [f"{v:.6g}" for v in row])
