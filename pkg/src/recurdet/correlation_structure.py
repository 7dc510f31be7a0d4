"""From occurrence-map correlations to a deformable part model.

Strongly correlated patch pairs (peak ratio of their coincidence map above a
threshold) form the edges of a graph whose edge labels are characteristic
spatial offsets. A least-squares planar embedding (graph Laplacian solve,
zero-mean gauge per connected component) turns the pairwise offsets into
per-patch coordinates. Patches whose correlation map is ridge-like (straight
edges in the object) get their occurrence maps rebuilt by matched filtering
with the convolution square root of the fitted autocorrelation Gaussian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptyGraph, ZeroMass
from .image_core import (
    BinaryMap,
    CorrelationMap,
    Patch,
    auto_correlation,
    cross_correlate_binary,
    lag_origin,
    non_max_suppress,
)

# Eigenvalues below this are treated as zero when forming eccentricities.
_EIG_FLOOR = 1e-12
# Minimum variance (px^2) injected into matched-filter kernels so ridge fits
# with a vanishing minor axis still yield a usable kernel.
_KERNEL_FLOOR = 0.25


@dataclass(frozen=True)
class PatchPairEdge:
    """Correlated pair (i, j) with the offset satisfying x_j - x_i = offset."""

    i: int
    j: int
    offset: tuple[float, float]  # (dr, dc), displacement from i-hits to j-hits
    peak_ratio: float


@dataclass(frozen=True)
class PatchGraph:
    vertices: tuple[int, ...]
    edges: tuple[PatchPairEdge, ...]

    def __post_init__(self):
        seen = set()
        vs = set(self.vertices)
        for e in self.edges:
            if e.i == e.j:
                raise ValueError(f"self-edge on vertex {e.i}")
            if e.i not in vs or e.j not in vs:
                raise ValueError(f"edge ({e.i},{e.j}) references unknown vertex")
            key = (min(e.i, e.j), max(e.i, e.j))
            if key in seen:
                raise ValueError(f"duplicate edge for pair {key}")
            seen.add(key)

    def degree(self, v: int) -> int:
        return sum(1 for e in self.edges if v in (e.i, e.j))

    def neighbors(self, v: int) -> list[int]:
        return [e.j if e.i == v else e.i for e in self.edges if v in (e.i, e.j)]

    def offset(self, i: int, j: int) -> np.ndarray | None:
        """Offset o_ij (so that x_j - x_i = o_ij), or None if not an edge."""
        for e in self.edges:
            if (e.i, e.j) == (i, j):
                return np.array(e.offset)
            if (e.i, e.j) == (j, i):
                return -np.array(e.offset)
        return None


@dataclass(frozen=True, eq=False)
class EmbeddedModel:
    """Planar coordinates per patch, zero-mean within each component."""

    coordinates: dict[int, np.ndarray]  # id -> (2,) float (row, col)
    components: tuple[tuple[int, ...], ...]

    def component_of(self, v: int) -> int:
        for k, comp in enumerate(self.components):
            if v in comp:
                return k
        raise KeyError(v)


@dataclass(frozen=True)
class GaussianFit:
    covariance: np.ndarray  # 2x2 symmetric PSD, px^2
    eccentricity: float  # sqrt(lambda_max / lambda_min), >= 1


def detect_pair(
    z_i: BinaryMap,
    z_j: BinaryMap,
    ratio_threshold: float = 2.0,
    *,
    i: int = 0,
    j: int = 1,
    max_lag: float | None = None,
    peak_window: int = 9,
) -> PatchPairEdge | None:
    """Test two occurrence maps for a characteristic spatial offset.

    The pair is accepted when the coincidence map's global peak exceeds
    ``ratio_threshold`` times the strongest 8-neighborhood local optimum
    outside the peak's own ``peak_window`` suppression window; with no such
    optimum the ratio is infinite. ``max_lag`` restricts the offset search
    (parts of one object cannot be arbitrarily far apart).
    """
    if z_i.count == 0 or z_j.count == 0:
        return None
    a, (orr, orc) = _tau_window(z_i, z_j, max_lag)
    flat_best = int(np.argmax(a))
    br, bc = np.unravel_index(flat_best, a.shape)
    best = a[br, bc]
    if best <= 0:
        return None

    # Strict local maxima over the 8-neighborhood (out-of-bounds = smaller).
    padded = np.full((a.shape[0] + 2, a.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = a
    center = padded[1:-1, 1:-1]
    is_local = np.ones_like(a, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            is_local &= center > padded[1 + dr : padded.shape[0] - 1 + dr, 1 + dc : padded.shape[1] - 1 + dc]
    h = peak_window // 2
    is_local[max(br - h, 0) : br + h + 1, max(bc - h, 0) : bc + h + 1] = False

    second = a[is_local].max() if is_local.any() else 0.0
    ratio = float("inf") if second <= 0 else float(best / second)
    if ratio <= ratio_threshold:
        return None
    return PatchPairEdge(
        i=i, j=j, offset=(float(br - orr), float(bc - orc)), peak_ratio=ratio
    )


def _tau_window(z_i: BinaryMap, z_j: BinaryMap, max_lag: float | None):
    """Coincidence counts and the zero-lag index, restricted to |lag| <= max_lag.

    With a lag cap the counts come from sparse pairwise hit differences
    (occurrence maps hold a few hundred points); cells beyond the cap are
    set to -1 so they can never win the peak scans. Without a cap the full
    FFT correlation map is used.
    """
    if max_lag is None:
        tau = cross_correlate_binary(z_i, z_j)
        return tau.data.copy(), lag_origin(tau)
    m = int(max_lag)
    pi = z_i.points()
    pj = z_j.points()
    if len(pi) * len(pj) > 2_000_000:
        tau = cross_correlate_binary(z_i, z_j)
        a = tau.data.copy()
        orr, orc = lag_origin(tau)
        mask = np.ones_like(a, dtype=bool)
        mask[max(orr - m, 0) : orr + m + 1, max(orc - m, 0) : orc + m + 1] = False
        a[mask] = -1.0
        return a, (orr, orc)
    diffs = (pj[None, :, :].astype(np.int64) - pi[:, None, :].astype(np.int64)).reshape(-1, 2)
    keep = (np.abs(diffs[:, 0]) <= m) & (np.abs(diffs[:, 1]) <= m)
    diffs = diffs[keep]
    side = 2 * m + 1
    idx = (diffs[:, 0] + m) * side + (diffs[:, 1] + m)
    counts = np.bincount(idx, minlength=side * side).astype(float).reshape(side, side)
    # Embed in a -1 frame so edge cells see out-of-cap neighbors as smaller,
    # matching the masked-FFT convention.
    a = np.full((side + 2, side + 2), -1.0)
    a[1:-1, 1:-1] = counts
    return a, (m + 1, m + 1)


def build_patch_graph(
    occurrences: dict[int, BinaryMap],
    ratio_threshold: float = 2.0,
    max_lag: float | None = None,
) -> PatchGraph:
    """Run detect_pair over all unordered pairs of occurrence maps."""
    ids = sorted(occurrences)
    edges = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            e = detect_pair(
                occurrences[ids[a]],
                occurrences[ids[b]],
                ratio_threshold,
                i=ids[a],
                j=ids[b],
                max_lag=max_lag,
            )
            if e is not None:
                edges.append(e)
    return PatchGraph(vertices=tuple(ids), edges=tuple(edges))


def fit_gaussian(R: CorrelationMap) -> GaussianFit:
    """Second-moment Gaussian fit of a correlation map about zero lag.

    Negative values are clamped to zero before normalizing; the covariance
    is the second central moment about the map center.
    """
    a = np.maximum(R.data, 0.0)
    total = a.sum()
    if total <= 0:
        raise ZeroMass("no positive mass to fit")
    orr, orc = lag_origin(R)
    rr, cc = np.mgrid[: a.shape[0], : a.shape[1]]
    dr = (rr - orr).ravel()
    dc = (cc - orc).ravel()
    w = a.ravel() / total
    cov = np.array(
        [
            [np.dot(w, dr * dr), np.dot(w, dr * dc)],
            [np.dot(w, dr * dc), np.dot(w, dc * dc)],
        ]
    )
    lam = np.linalg.eigvalsh(cov)
    lo, hi = float(lam[0]), float(lam[1])
    if hi <= _EIG_FLOOR:
        ecc = 1.0
    elif lo <= _EIG_FLOOR:
        ecc = float("inf")
    else:
        ecc = float(np.sqrt(hi / lo))
    return GaussianFit(covariance=cov, eccentricity=ecc)


def crop_about_origin(m: CorrelationMap, radius: int) -> CorrelationMap:
    """Restrict a lag map to |lag| <= radius per axis (keeps odd dimensions)."""
    orr, orc = lag_origin(m)
    r0, r1 = max(orr - radius, 0), min(orr + radius + 1, m.height)
    c0, c1 = max(orc - radius, 0), min(orc + radius + 1, m.width)
    return CorrelationMap(m.data[r0:r1, c0:c1])


def ridge_fit(rho: CorrelationMap, fit_radius: int) -> GaussianFit:
    """Gaussian fit of the autocorrelation of max(rho, 0) near zero lag.

    Callers gate the edge-patch correction on this fit's eccentricity.
    """
    pos = CorrelationMap(np.maximum(rho.data, 0.0))
    R = auto_correlation(pos)
    return fit_gaussian(crop_about_origin(R, fit_radius))


def gaussian_kernel(cov: np.ndarray) -> np.ndarray:
    """Discrete unit-sum Gaussian with the given covariance."""
    cov = np.asarray(cov, dtype=float) + _KERNEL_FLOOR * np.eye(2)
    lam = np.linalg.eigvalsh(cov)
    rad = max(1, int(np.ceil(3.0 * np.sqrt(float(lam[-1])))))
    rr, cc = np.mgrid[-rad : rad + 1, -rad : rad + 1]
    inv = np.linalg.inv(cov)
    q = inv[0, 0] * rr * rr + 2 * inv[0, 1] * rr * cc + inv[1, 1] * cc * cc
    k = np.exp(-0.5 * q)
    return k / k.sum()


def correct_edge_patch(rho: CorrelationMap, cfg, fit_radius: int | None = None) -> BinaryMap:
    """Rebuild an occurrence map for a ridge-like correlation map.

    The autocorrelation of max(rho, 0) is fit with a Gaussian; convolving
    rho with the half-covariance Gaussian (the fit's convolution square
    root) turns each linear feature into a single peak, and suppression at
    1 - epsilon of the filtered maximum marks one occurrence per feature.
    """
    radius = cfg.object_size if fit_radius is None else fit_radius
    fit = ridge_fit(rho, radius)
    pos = np.maximum(rho.data, 0.0)
    kernel = gaussian_kernel(fit.covariance / 2.0)
    filtered = fftconvolve(pos, kernel, mode="same")
    threshold = (1.0 - cfg.epsilon) * float(filtered.max())
    return non_max_suppress(CorrelationMap(filtered), threshold, cfg.patch_side)


def prune_graph(g: PatchGraph, n: int) -> PatchGraph:
    """Drop vertices with fewer than ceil(n/10) pairs, in a single pass."""
    threshold = -(-n // 10)
    keep = tuple(v for v in g.vertices if g.degree(v) >= threshold)
    if not keep:
        raise EmptyGraph(f"no vertex has {threshold}+ pairs")
    kept = set(keep)
    edges = tuple(e for e in g.edges if e.i in kept and e.j in kept)
    return PatchGraph(vertices=keep, edges=edges)


def embed(g: PatchGraph) -> EmbeddedModel:
    """Least-squares planar coordinates from pairwise offsets.

    Per connected component, solves the Laplacian normal equations of
    min sum ||x_j - x_i - o_ij||^2 independently per axis; the least-norm
    solution is automatically zero-mean within the component.
    """
    if not g.vertices:
        raise EmptyGraph("cannot embed an empty graph")
    adjacency: dict[int, list[int]] = {v: [] for v in g.vertices}
    for e in g.edges:
        adjacency[e.i].append(e.j)
        adjacency[e.j].append(e.i)

    components: list[tuple[int, ...]] = []
    seen: set[int] = set()
    for v in g.vertices:
        if v in seen:
            continue
        queue, comp = [v], []
        seen.add(v)
        while queue:
            u = queue.pop()
            comp.append(u)
            for w in adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        components.append(tuple(sorted(comp)))

    coordinates: dict[int, np.ndarray] = {}
    for comp in components:
        k = len(comp)
        if k == 1:
            coordinates[comp[0]] = np.zeros(2)
            continue
        index = {v: a for a, v in enumerate(comp)}
        lap = np.zeros((k, k))
        rhs = np.zeros((k, 2))
        for e in g.edges:
            if e.i not in index:
                continue
            a, b = index[e.i], index[e.j]
            lap[a, a] += 1
            lap[b, b] += 1
            lap[a, b] -= 1
            lap[b, a] -= 1
            o = np.array(e.offset)
            rhs[b] += o
            rhs[a] -= o
        x, *_ = np.linalg.lstsq(lap, rhs, rcond=None)
        x -= x.mean(axis=0)
        resid = np.abs(lap @ x - rhs).max()
        if resid > 1e-8:
            raise ArithmeticError(f"embedding normal equations residual {resid:g}")
        for v in comp:
            coordinates[v] = x[index[v]]
    return EmbeddedModel(coordinates=coordinates, components=tuple(components))


def embedding_objective(g: PatchGraph, coords: dict[int, np.ndarray]) -> float:
    """Sum of squared offset misfits for a candidate embedding."""
    total = 0.0
    for e in g.edges:
        d = coords[e.j] - coords[e.i] - np.array(e.offset)
        total += float(d @ d)
    return total


def model_to_json(model: EmbeddedModel, patches: dict[int, Patch]) -> dict:
    """Serializable model document: id, pixel block, coordinate, component."""
    return {
        "patches": [
            {
                "id": v,
                "pixels": patches[v].data.tolist(),
                "coordinate": {"y": float(model.coordinates[v][0]), "x": float(model.coordinates[v][1])},
                "component": model.component_of(v),
            }
            for v in sorted(model.coordinates)
        ]
    }


def model_from_json(doc: dict) -> tuple[EmbeddedModel, dict[int, Patch]]:
    coordinates: dict[int, np.ndarray] = {}
    patches: dict[int, Patch] = {}
    comps: dict[int, list[int]] = {}
    for entry in doc["patches"]:
        v = int(entry["id"])
        coordinates[v] = np.array([entry["coordinate"]["y"], entry["coordinate"]["x"]])
        patches[v] = Patch(np.array(entry["pixels"]))
        comps.setdefault(int(entry["component"]), []).append(v)
    components = tuple(tuple(sorted(comps[k])) for k in sorted(comps))
    return EmbeddedModel(coordinates=coordinates, components=components), patches


def save_model(model: EmbeddedModel, patches: dict[int, Patch], path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model, patches)))


def load_model(path) -> tuple[EmbeddedModel, dict[int, Patch]]:
    return model_from_json(json.loads(Path(path).read_text()))
