"""Iterative extraction of recurrent patches, the DPM's visual descriptors.

Each round draws a fixed number of random candidate windows, scores them by
how often they recur in the image (occurrence-map frequency), and keeps the
most frequent one. Pixels covered by accepted occurrence maps are excluded
from later rounds so the same structure is not selected twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import ConfigError, DegenerateBox, NoRecurrence
from .image_core import BinaryMap, GrayImage, NccEngine, Patch, non_max_suppress

# Mining never runs longer than this, whatever the stop rule says.
MAX_ROUNDS = 64


@dataclass(frozen=True)
class MiningConfig:
    epsilon: float = 1 / 20
    patch_side: int = 9
    candidates_per_round: int = 30
    stop_fraction: float = 0.30
    # Floor sits above the window variance of plausible sensor noise
    # (sigma 0.02 -> 4e-4); low-variance windows cannot describe shape.
    variance_floor: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 < self.stop_fraction < 1:
            raise ConfigError(f"stop_fraction must be in (0, 1), got {self.stop_fraction}")
        if self.patch_side % 2 == 0 or self.patch_side < 3:
            raise ConfigError(f"patch_side must be odd and >= 3, got {self.patch_side}")
        if self.candidates_per_round < 1:
            raise ConfigError("candidates_per_round must be positive")

    @property
    def object_size(self) -> int:
        """Canonical object extent: three patch sides."""
        return 3 * self.patch_side


@dataclass(frozen=True, eq=False)
class RecurrentPatch:
    """A mined patch with its occurrence map and frequency."""

    id: int
    patch: Patch
    occurrence: BinaryMap
    frequency: int
    source: tuple[int, int]  # (row, col) of the source window center


def rescale_to_canonical(
    img: GrayImage, bbox: tuple[int, int, int, int], cfg: MiningConfig
) -> tuple[GrayImage, float]:
    """Rescale so the boxed object spans the canonical size (3 patch sides).

    ``bbox`` is (x, y, w, h) in pixel coordinates (x = column). Returns the
    rescaled image and the scale factor; original coordinates are recovered
    by dividing rescaled coordinates by the factor.
    """
    x, y, w, h = bbox
    if w < 4 or h < 4:
        raise DegenerateBox(f"bbox {bbox} too small")
    if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise DegenerateBox(f"bbox {bbox} exceeds image {img.width}x{img.height}")
    scale = cfg.object_size / max(w, h)
    if scale == 1.0:
        return img, 1.0
    out_h = int(img.height * scale + 0.5)
    out_w = int(img.width * scale + 0.5)
    return GrayImage(_bilinear_resize(img.data, out_h, out_w)), scale


def _bilinear_resize(a: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = a.shape
    # Pixel-center alignment: output center maps to input center.
    r = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    c = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    r = np.clip(r, 0, in_h - 1)
    c = np.clip(c, 0, in_w - 1)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = a[np.ix_(r0, c0)] * (1 - fc) + a[np.ix_(r0, c1)] * fc
    bot = a[np.ix_(r1, c0)] * (1 - fc) + a[np.ix_(r1, c1)] * fc
    out = top * (1 - fr) + bot * fr
    return np.clip(out, 0.0, 1.0)


def mine_recurrent_patches(img: GrayImage, cfg: MiningConfig) -> list[RecurrentPatch]:
    """Greedy rounds of candidate sampling, keeping the most frequent patch.

    Stops when the round's best frequency falls below ``stop_fraction`` of
    the maximal frequency seen so far. Raises NoRecurrence if the first
    round cannot produce a patch with at least two occurrences.
    """
    side = cfg.patch_side
    if img.height < 3 * side or img.width < 3 * side:
        raise NoRecurrence(f"image {img.height}x{img.width} below 3 patch sides per dimension")
    rng = np.random.default_rng(cfg.rng_seed)
    h = side // 2
    engine = NccEngine(img, side)
    interior = np.zeros((img.height, img.width), dtype=bool)
    interior[h : img.height - h, h : img.width - h] = True
    excluded = np.zeros_like(interior)

    found: list[RecurrentPatch] = []
    max_frequency = 0
    for _ in range(MAX_ROUNDS):
        # Candidate windows must not overlap any previously claimed pixel.
        blocked = maximum_filter(excluded, size=side, mode="constant", cval=False)
        admissible = np.argwhere(interior & ~blocked)
        if len(admissible) == 0:
            break
        # Low-variance windows are skipped without consuming a candidate
        # slot: the round considers candidates_per_round windows that can
        # actually describe shape (or as many as exist).
        order = rng.permutation(len(admissible))
        best: tuple[int, Patch, BinaryMap, tuple[int, int]] | None = None
        considered = 0
        for pick in order:
            r, c = admissible[pick]
            center = (int(r), int(c))
            window = img.data[r - h : r + h + 1, c - h : c + h + 1]
            if float(np.var(window)) < cfg.variance_floor:
                continue
            patch = Patch(window)
            rho = engine.map(patch)
            z = non_max_suppress(rho, 1.0 - cfg.epsilon, side)
            occ = z.data & ~excluded
            freq = int(occ.sum())
            if best is None or freq > best[0]:
                best = (freq, patch, BinaryMap(occ), center)
            considered += 1
            if considered >= cfg.candidates_per_round:
                break

        best_freq = best[0] if best is not None else 0
        if not found and best_freq < 2:
            raise NoRecurrence("no candidate patch recurs at least twice")
        if best is None or best_freq < cfg.stop_fraction * max_frequency:
            break
        freq, patch, occ, center = best
        found.append(
            RecurrentPatch(
                id=len(found), patch=patch, occurrence=occ, frequency=freq, source=center
            )
        )
        max_frequency = max(max_frequency, freq)
        excluded |= occ.data
    return found
