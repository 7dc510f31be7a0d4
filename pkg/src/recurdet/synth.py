"""Synthetic repeating-object scenes with ground truth.

Scenes are built from an object template (an opaque body plus several
distinct sub-part stamps at fixed offsets), painted at rejection-sampled
centers. Per-part jitter deforms instances, occluded instances are
overdrawn by a neighboring instance, and an optional second template adds
a distractor population. Everything is deterministic under the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, PlacementFailure
from .image_core import GrayImage

# Instance centers are kept at least this fraction of the object size apart.
MIN_SEPARATION_FACTOR = 0.8
# Occlusion pairs sit below the separation floor on purpose: at or above
# the floor a neighboring disc only grazes the rim and cannot hide parts.
#0.74 balances three constraints: the occluder's body reaches the rim-ward
# parts, the pair still resolves into two vote clusters, and object-size
# occlusion rays land inside the occluder's circle from any angular bin.
OCCLUDER_DISTANCE_FACTOR = 0.74
MAX_PLACEMENT_ATTEMPTS = 100_000


@dataclass(frozen=True, eq=False)
class PartStamp:
    """One sub-part: an opaque intensity stamp painted at a fixed offset."""

    offset: tuple[int, int]  # (dr, dc) from the instance center
    values: np.ndarray  # float intensities
    mask: np.ndarray  # bool support; only masked pixels are painted


@dataclass(frozen=True, eq=False)
class ObjectTemplate:
    name: str
    size: int  # bounding extent in pixels
    parts: tuple[PartStamp, ...]  # painted in order; parts[0] is the body


def _disc(radius: float, value: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(np.ceil(radius)) * 2 + 1
    c = n // 2
    rr, cc = np.mgrid[:n, :n]
    mask = (rr - c) ** 2 + (cc - c) ** 2 <= radius**2
    return np.full((n, n), value), mask


def _ring(r_out: float, r_in: float, value: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(np.ceil(r_out)) * 2 + 1
    c = n // 2
    rr, cc = np.mgrid[:n, :n]
    d2 = (rr - c) ** 2 + (cc - c) ** 2
    mask = (d2 <= r_out**2) & (d2 >= r_in**2)
    return np.full((n, n), value), mask


def _rect(h: int, w: int, value: float) -> tuple[np.ndarray, np.ndarray]:
    return np.full((h, w), value), np.ones((h, w), dtype=bool)


def _crescent(radius: float, value: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(np.ceil(radius)) * 2 + 1
    c = n // 2
    rr, cc = np.mgrid[:n, :n]
    outer = (rr - c) ** 2 + (cc - c) ** 2 <= radius**2
    bite = (rr - c - radius * 0.45) ** 2 + (cc - c - radius * 0.45) ** 2 <= (radius * 0.8) ** 2
    return np.full((n, n), value), outer & ~bite


def default_target_template(size: int = 27) -> ObjectTemplate:
    """Disc body with four distinct curved blobs near the rim, asymmetric.

    Parts are curved on purpose (straight edges recur at several positions
    per instance, making occurrence counts ambiguous) and sit near the rim
    so a touching occluder actually hides them.
    """
    s = size / 27.0
    body = PartStamp((0, 0), *_disc(12 * s, 0.30))
    parts = (
        body,
        PartStamp((round(-6 * s), round(-2 * s)), *_disc(2.6 * s, 0.95)),
        PartStamp((round(2 * s), round(6 * s)), *_disc(2.2 * s, 0.04)),
        PartStamp((round(6 * s), round(-5 * s)), *_ring(3.2 * s, 1.4 * s, 0.85)),
        PartStamp((round(-1 * s), round(8 * s)), *_crescent(3.0 * s, 0.72)),
    )
    return ObjectTemplate("target", size, parts)


def blob_constellation_template(size: int = 27) -> ObjectTemplate:
    """Five small curved blobs, no large body disc.

    Without a big rim (whose locally straight edge matches at several spots
    per instance) minable windows are position-unique. The constellation
    stays within half the minimum center separation so neighboring
    instances never overpaint each other's parts.
    """
    s = size / 27.0
    parts = (
        PartStamp((0, 0), *_disc(3.0 * s, 0.90)),
        PartStamp((round(-6 * s), round(-2 * s)), *_disc(2.6 * s, 0.55)),
        PartStamp((round(3 * s), round(6 * s)), *_ring(3.2 * s, 1.4 * s, 0.85)),
        PartStamp((round(6 * s), round(-4 * s)), *_crescent(3.0 * s, 0.72)),
        PartStamp((round(-2 * s), round(7 * s)), *_disc(2.2 * s, 0.35)),
    )
    return ObjectTemplate("constellation", size, parts)


def textured_constellation_template(size: int = 27, texture_seed: int = 99) -> ObjectTemplate:
    """Constellation whose parts carry fixed random texture.

    Smooth discs and rings share locally similar edges (correlation is
    contrast-invariant), so windows clipping a part's edge can match other
    parts. Per-part texture makes every window position-unique, which gives
    occurrence frequencies exactly equal to the instance count.
    """
    base = blob_constellation_template(size)
    rng = np.random.default_rng(texture_seed)
    parts = []
    for part in base.parts:
        noise = rng.uniform(0.15, 0.95, size=part.values.shape)
        parts.append(PartStamp(part.offset, noise, part.mask))
    return ObjectTemplate("textured", size, tuple(parts))


def default_distractor_template(size: int = 27) -> ObjectTemplate:
    """Second population: same body as the target, different interior parts.

    The shared body makes rim patches fire equally on both populations, so
    member counts overlap and the patch-composition features have to carry
    the separation.
    """
    s = size / 27.0
    body = PartStamp((0, 0), *_disc(12 * s, 0.30))
    cross_v = _rect(max(5, round(7 * s)), max(2, round(2 * s)), 0.98)
    parts = (
        body,
        PartStamp((round(-5 * s), round(4 * s)), *cross_v),
        PartStamp((round(5 * s), round(5 * s)), *_disc(2.2 * s, 0.10)),
        PartStamp((round(4 * s), round(-6 * s)), *_rect(max(2, round(2 * s)), max(5, round(7 * s)), 0.92)),
        PartStamp((round(-6 * s), round(-5 * s)), *_ring(2.8 * s, 1.2 * s, 0.55)),
    )
    return ObjectTemplate("distractor", size, parts)


def lone_blob_template(size: int = 27) -> ObjectTemplate:
    """Clutter: a single bright blob, shaped like one target part."""
    return ObjectTemplate("blob", size, (PartStamp((0, 0), *_disc(2.6 * size / 27.0, 0.95)),))


def occluded_shell_template(size: int = 27, cut_factor: float = 0.60) -> ObjectTemplate:
    """Clutter that impersonates an occluded target instance.

    The body is the target disc cut by a circle (a concave arc with the
    same curvature as the rim, so it spawns no tell-tale new patch),
    keeping only the two parts that survive the cut. Base features cannot
    tell these from truly occluded instances; only the occlusion rays can,
    because nothing sits beyond the missing side.
    """
    s = size / 27.0
    disc_vals, disc_mask = _disc(12 * s, 0.30)
    n = disc_vals.shape[0]
    c = n // 2
    rr, cc = np.mgrid[:n, :n]
    cut = (rr - c) ** 2 + (cc - c - cut_factor * size) ** 2 <= (12 * s) ** 2
    parts = (
        PartStamp((0, 0), disc_vals, disc_mask & ~cut),
        PartStamp((round(-6 * s), round(-2 * s)), *_disc(2.6 * s, 0.95)),
        PartStamp((round(6 * s), round(-5 * s)), *_ring(3.2 * s, 1.4 * s, 0.85)),
    )
    return ObjectTemplate("shell", size, parts)


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    template: ObjectTemplate
    count: int
    jitter: int = 0
    noise_sigma: float = 0.0
    occlusion_rate: float = 0.0
    distractor: ObjectTemplate | None = None
    distractor_count: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("count must be >= 1")
        if len(self.template.parts) < 4:
            raise ConfigError("object template needs at least 4 distinct sub-parts")
        from .detection import RANSAC_SIGMA

        if not self.jitter < RANSAC_SIGMA / 2:
            raise ConfigError(f"jitter must stay below {RANSAC_SIGMA / 2}")
        if not 0.0 <= self.occlusion_rate <= 0.5:
            raise ConfigError("occlusion_rate must be in [0, 0.5]")
        if self.distractor_count > 0 and self.distractor is None:
            raise ConfigError("distractor_count set without a distractor template")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    centers: np.ndarray  # (n, 2) float (row, col)
    labels: tuple[str, ...]  # "target" or "distractor"
    occluded: np.ndarray  # (n,) bool, target instances overdrawn by a neighbor
    bbox: tuple[int, int, int, int]  # (x, y, w, h) around one clean instance
    object_size: int

    @property
    def target_centers(self) -> np.ndarray:
        keep = [i for i, lab in enumerate(self.labels) if lab == "target"]
        return self.centers[keep]

    def to_json(self) -> dict:
        return {
            "object_size": self.object_size,
            "bbox": list(self.bbox),
            "centers": [
                {
                    "x": float(c),
                    "y": float(r),
                    "label": self.labels[i],
                    "occluded": bool(self.occluded[i]),
                }
                for i, (r, c) in enumerate(self.centers)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruth":
        centers = np.array([[e["y"], e["x"]] for e in doc["centers"]], dtype=float)
        return cls(
            centers=centers.reshape(-1, 2),
            labels=tuple(e["label"] for e in doc["centers"]),
            occluded=np.array([e["occluded"] for e in doc["centers"]], dtype=bool),
            bbox=tuple(doc["bbox"]),
            object_size=int(doc["object_size"]),
        )


def _sample_jitter(rng: np.random.Generator, jitter: int, n: int) -> np.ndarray:
    """Center-weighted integer displacements with |d| <= jitter per axis."""
    if jitter == 0:
        return np.zeros((n, 2), dtype=int)
    raw = rng.normal(0.0, jitter / 2.0, size=(n, 2))
    return np.clip(np.rint(raw), -jitter, jitter).astype(int)


def _paint_instance(
    canvas: np.ndarray, center: np.ndarray, template: ObjectTemplate, jit: np.ndarray
) -> None:
    h, w = canvas.shape
    for part, (jr, jc) in zip(template.parts, jit):
        vals, mask = part.values, part.mask
        ph, pw = vals.shape
        r0 = int(center[0]) + part.offset[0] + jr - ph // 2
        c0 = int(center[1]) + part.offset[1] + jc - pw // 2
        rs, cs = max(r0, 0), max(c0, 0)
        re, ce = min(r0 + ph, h), min(c0 + pw, w)
        if rs >= re or cs >= ce:
            continue
        sub = mask[rs - r0 : re - r0, cs - c0 : ce - c0]
        canvas[rs:re, cs:ce][sub] = vals[rs - r0 : re - r0, cs - c0 : ce - c0][sub]


def generate(spec: SceneSpec) -> tuple[GrayImage, GroundTruth]:
    """Render a scene and its ground truth, deterministic under the seed."""
    rng = np.random.default_rng(spec.rng_seed)
    size = spec.template.size
    margin = size // 2 + spec.jitter + 2
    if spec.height <= 2 * margin or spec.width <= 2 * margin:
        raise ConfigError("canvas too small for the object size")
    min_sep = MIN_SEPARATION_FACTOR * size

    n_occluded = int(round(spec.occlusion_rate * spec.count))
    n_free = spec.count - n_occluded

    def propose() -> np.ndarray:
        return np.array(
            [
                rng.integers(margin, spec.height - margin),
                rng.integers(margin, spec.width - margin),
            ],
            dtype=float,
        )

    def far_enough(p: np.ndarray, placed: list[np.ndarray]) -> bool:
        return all(np.hypot(*(p - q)) >= min_sep for q in placed)

    # Occluded pairs go first (partner below the separation floor, drawn
    # later so it overdraws deeply); crowded scenes cannot fit the pairs
    # after the fact.
    occluded_centers: list[np.ndarray] = []
    partner_centers: list[np.ndarray] = []
    attempts = 0
    while len(occluded_centers) < n_occluded:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise PlacementFailure(f"placed {len(occluded_centers)} of {n_occluded} occluded pairs")
        base = propose()
        theta = rng.uniform(0, 2 * np.pi)
        partner = np.rint(
            base + OCCLUDER_DISTANCE_FACTOR * size * np.array([np.sin(theta), np.cos(theta)])
        )
        inside = (
            margin <= partner[0] < spec.height - margin
            and margin <= partner[1] < spec.width - margin
        )
        placed = occluded_centers + partner_centers
        if inside and far_enough(base, placed) and far_enough(partner, placed):
            occluded_centers.append(base)
            partner_centers.append(partner)

    n_rest = n_free - n_occluded  # partners count toward the instance total
    if n_rest < 0:
        raise PlacementFailure("occlusion rate leaves no room for free instances")
    rest: list[np.ndarray] = []
    attempts = 0
    while len(rest) < n_rest + spec.distractor_count:
        p = propose()
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise PlacementFailure(f"placed {len(rest)} of {n_rest + spec.distractor_count}")
        if far_enough(p, occluded_centers + partner_centers + rest):
            rest.append(p)
    free_centers = partner_centers + rest[:n_rest]
    distractor_centers = rest[n_rest:]

    canvas = np.zeros((spec.height, spec.width))
    # Occluded instances first so their partners overdraw them.
    draw_plan = [(c, spec.template) for c in occluded_centers]
    draw_plan += [(c, spec.template) for c in free_centers]
    draw_plan += [(c, spec.distractor) for c in distractor_centers]
    for center, template in draw_plan:
        jit = _sample_jitter(rng, spec.jitter, len(template.parts))
        _paint_instance(canvas, center, template, jit)

    if spec.noise_sigma > 0:
        canvas = canvas + rng.normal(0.0, spec.noise_sigma, size=canvas.shape)
    canvas = np.clip(canvas, 0.0, 1.0)

    centers = np.array(occluded_centers + free_centers + distractor_centers).reshape(-1, 2)
    labels = ("target",) * spec.count + ("distractor",) * spec.distractor_count
    occluded = np.zeros(len(centers), dtype=bool)
    occluded[:n_occluded] = True

    ref = free_centers[0]  # a clean instance for the user's bounding box
    half = size // 2
    bbox = (int(ref[1]) - half, int(ref[0]) - half, size, size)
    truth = GroundTruth(
        centers=centers, labels=labels, occluded=occluded, bbox=bbox, object_size=size
    )
    return GrayImage(canvas), truth


@dataclass(frozen=True)
class DetectionScore:
    count_error: int
    false_pos: int
    false_neg: int
    f1: float


def score_detections(detections, truth_centers, tol: float) -> DetectionScore:
    """Greedy nearest-pair matching of detections to truth centers.

    Pairs within ``tol`` are matched in order of increasing distance (ties
    by index), each side used at most once.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    det = np.asarray(detections, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth_centers, dtype=float).reshape(-1, 2)
    pairs = []
    for ti, t in enumerate(tru):
        d = np.hypot(*(det - t).T) if len(det) else np.array([])
        for di in np.nonzero(d <= tol)[0]:
            pairs.append((float(d[di]), ti, int(di)))
    pairs.sort()
    used_t: set[int] = set()
    used_d: set[int] = set()
    for _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
    matched = len(used_t)
    fp = len(det) - matched
    fn = len(tru) - matched
    f1 = 2 * matched / (len(det) + len(tru)) if (len(det) + len(tru)) else 1.0
    return DetectionScore(
        count_error=abs(len(det) - len(tru)), false_pos=fp, false_neg=fn, f1=f1
    )


def write_scene(img: GrayImage, truth: GroundTruth, stem: Path) -> tuple[Path, Path]:
    """Write `<stem>.png` and `<stem>.truth.json` side by side."""
    from .image_core import save_png

    png = stem.with_suffix(".png")
    tj = stem.with_suffix(".truth.json")
    save_png(img, png)
    tj.write_text(json.dumps(truth.to_json(), indent=1))
    return png, tj
