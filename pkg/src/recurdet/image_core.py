"""Raster containers and correlation kernels: NCC, auto-correlation, NMS.

Everything downstream (patch mining, structure recovery, detection) is built
on the four operations in this module. All functions are pure: inputs are
never mutated and the returned containers hold freshly allocated arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import maximum_filter
from scipy.signal import correlate, fftconvolve

from .errors import (
    ConstantMap,
    DimensionMismatch,
    ImageTooSmall,
    UnsupportedImageFormat,
    ZeroVariancePatch,
)

# Rec. 601 luma weights for color decode.
_LUMA = (0.299, 0.587, 0.114)

# Windows whose mean-subtracted squared norm falls below this are treated as
# flat: their score is set to 0 in both correlation paths, because dividing
# by a near-zero deviation estimate is dominated by roundoff and the two
# paths would otherwise drift apart.
FLAT_WINDOW_SQNORM = 1e-10


def _as_float_raster(data) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raster contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major intensity raster with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float_raster(self.data)
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Patch:
    """Square window with its cached mean and deviation norm.

    ``deviation`` is the L2 norm of the mean-subtracted pixel vector, so a
    patch correlated against itself scores exactly 1.
    """

    data: np.ndarray
    mean: float = 0.0
    deviation: float = 0.0

    def __post_init__(self):
        arr = _as_float_raster(self.data)
        if arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 == 0:
            raise ValueError(f"patch must be square with odd side, got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        # Cached statistics are always recomputed from the pixels.
        object.__setattr__(self, "mean", float(arr.mean()))
        object.__setattr__(self, "deviation", float(np.linalg.norm(arr - arr.mean())))

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_image(cls, img: GrayImage, center: tuple[int, int], side: int = 9) -> "Patch":
        r, c = center
        h = side // 2
        if r - h < 0 or c - h < 0 or r + h >= img.height or c + h >= img.width:
            raise ValueError(f"patch window at {center} exceeds image bounds")
        return cls(img.data[r - h : r + h + 1, c - h : c + h + 1])


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    """Raster of correlation scores (or coincidence counts for lag maps)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float_raster(self.data)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMap:
    """Occurrence indicator raster, values in {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data))
        if arr.ndim != 2:
            raise ValueError(f"binary map must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            uniq = np.unique(arr)
            if not np.all(np.isin(uniq, (0, 1))):
                raise ValueError("binary map values must be 0 or 1")
            arr = arr.astype(bool)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def points(self) -> np.ndarray:
        """Set pixels as an (n, 2) array of (row, col), lexicographic order."""
        return np.argwhere(self.data)


def lag_origin(m: CorrelationMap) -> tuple[int, int]:
    """Index of zero lag in a full correlation map (odd dimensions)."""
    return ((m.height - 1) // 2, (m.width - 1) // 2)


class NccEngine:
    """Repeated NCC maps against one image.

    The per-window deviation terms depend only on the image and the patch
    side, so they are computed once; each patch then costs a single
    convolution. ``ncc_map`` delegates here for one-shot use.
    """

    def __init__(self, img: GrayImage, side: int):
        if side % 2 == 0 or side < 3:
            raise ValueError("patch side must be odd and >= 3")
        if img.height < side or img.width < side:
            raise ImageTooSmall(f"image {img.height}x{img.width} smaller than patch side {side}")
        self.img = img
        self.side = side
        ones = np.ones((side, side))
        wsum = fftconvolve(img.data, ones, mode="same")
        wsq = fftconvolve(img.data * img.data, ones, mode="same")
        self._dev_sq = np.maximum(wsq - wsum * wsum / (side * side), 0.0)
        self._dev = np.sqrt(self._dev_sq)

    def map(self, p: Patch) -> CorrelationMap:
        if p.side != self.side:
            raise ValueError(f"engine built for side {self.side}, got {p.side}")
        if p.deviation**2 <= FLAT_WINDOW_SQNORM:
            raise ZeroVariancePatch(f"patch deviation {p.deviation:g} is too small")
        img = self.img.data
        h = self.side // 2
        kernel = p.data - p.mean
        # <p - mu_p, q - mu_q> == <p - mu_p, q> because the kernel sums to zero.
        num = fftconvolve(img, kernel[::-1, ::-1], mode="same")
        denom = p.deviation * self._dev
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(self._dev_sq > FLAT_WINDOW_SQNORM, num / denom, 0.0)
        scores = np.clip(scores, -1.0, 1.0)
        out = np.full(img.shape, -1.0)
        out[h : img.shape[0] - h, h : img.shape[1] - h] = scores[
            h : img.shape[0] - h, h : img.shape[1] - h
        ]
        return CorrelationMap(out)


def ncc_map(img: GrayImage, p: Patch, method: str = "fft") -> CorrelationMap:
    """Normalized cross-correlation of a patch against every interior window.

    The score at pixel x is ``<p - mu_p, q - mu_q> / (|p - mu_p| |q - mu_q|)``
    for the window q centered at x, i.e. the cosine of the mean-subtracted
    vectors, so a patch against its own source window scores exactly 1.
    Windows overlapping the border are undefined and set to -1.

    Parameters
    ----------
    img : GrayImage
    p : Patch
    method : "fft" or "direct"
        "direct" evaluates every window with an explicit O(N s^2) loop and
        exists as the reference path; "fft" computes the same scores from
        FFT convolutions (via NccEngine).
    """
    side = p.side
    if p.deviation**2 <= FLAT_WINDOW_SQNORM:
        raise ZeroVariancePatch(f"patch deviation {p.deviation:g} is too small")
    if img.height < side or img.width < side:
        raise ImageTooSmall(f"image {img.height}x{img.width} smaller than patch side {side}")
    if method == "fft":
        return NccEngine(img, side).map(p)
    if method == "direct":
        scores = _ncc_direct(img.data, p)
        h = side // 2
        out = np.full(img.data.shape, -1.0)
        out[h : img.height - h, h : img.width - h] = scores
        return CorrelationMap(out)
    raise ValueError(f"unknown method {method!r}")


def _ncc_direct(img: np.ndarray, p: Patch) -> np.ndarray:
    side = p.side
    h = side // 2
    kernel = p.data - p.mean
    n = side * side
    rows = img.shape[0] - 2 * h
    cols = img.shape[1] - 2 * h
    scores = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            window = img[i : i + side, j : j + side]
            dev_sq = float(np.sum(window * window) - window.sum() ** 2 / n)
            if dev_sq <= FLAT_WINDOW_SQNORM:
                continue
            scores[i, j] = float(np.sum(kernel * window)) / (p.deviation * math.sqrt(dev_sq))
    return np.clip(scores, -1.0, 1.0)


def auto_correlation(m: CorrelationMap) -> CorrelationMap:
    """Raw zero-padded auto-correlation, full extent, zero lag at the center.

    R(d) = sum_x m(x) m(x+d). The output has odd dimensions (2H-1, 2W-1) and
    is symmetrized to remove FFT roundoff (R is exactly even in theory).
    """
    a = m.data
    if np.ptp(a) == 0.0:
        raise ConstantMap("auto-correlation of a constant map is undefined")
    full = fftconvolve(a, a[::-1, ::-1], mode="full")
    full = 0.5 * (full + full[::-1, ::-1])
    return CorrelationMap(full)


def cross_correlate_binary(z_i: BinaryMap, z_j: BinaryMap) -> CorrelationMap:
    """Coincidence counts between two occurrence maps at every lag.

    tau(d) = sum_y z_i(y) z_j(y + d): the number of set pixels of z_j that
    land on set pixels of z_i when z_j is pulled back by d. Zero lag is at
    the center of the (2H-1, 2W-1) output. Counts are exact integers.
    """
    if z_i.data.shape != z_j.data.shape:
        raise DimensionMismatch(f"{z_i.data.shape} vs {z_j.data.shape}")
    a = z_j.data.astype(np.float64)
    b = z_i.data.astype(np.float64)
    tau = correlate(a, b, mode="full", method="fft")
    return CorrelationMap(np.rint(tau))


def non_max_suppress(m: CorrelationMap, threshold: float, window: int) -> BinaryMap:
    """Threshold + local-maximum suppression.

    A pixel is set iff its score exceeds ``threshold`` and it beats every
    other pixel in the centered ``window`` x ``window`` neighborhood, with
    equal scores broken by lexicographic (row, col) order. Consequently no
    two set pixels ever share a window.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    a = m.data
    win_max = maximum_filter(a, size=window, mode="constant", cval=-np.inf)
    candidates = np.argwhere((a > threshold) & (a >= win_max))
    h = window // 2
    out = np.zeros(a.shape, dtype=bool)
    for r, c in candidates:
        r0, c0 = max(r - h, 0), max(c - h, 0)
        block = a[r0 : r + h + 1, c0 : c + h + 1]
        ties = np.argwhere(block == a[r, c])
        tr, tc = ties[0]
        if r0 + tr == r and c0 + tc == c:
            out[r, c] = True
    return BinaryMap(out)


def load_image(path) -> GrayImage:
    """Decode an 8-bit PGM (P5) or PNG file; color is reduced to Rec. 601 luma."""
    path = Path(path)
    try:
        im = Image.open(path)
        im.load()
    except Exception as exc:
        raise UnsupportedImageFormat(f"cannot decode {path}: {exc}") from exc
    if im.format not in ("PNG", "PPM"):
        raise UnsupportedImageFormat(f"{path}: format {im.format} not supported (PGM/PNG only)")
    if im.mode == "P":
        im = im.convert("RGB")
    if im.mode in ("RGBA", "LA"):
        im = im.convert(im.mode[:-1])
    if im.mode == "RGB":
        rgb = np.asarray(im, dtype=np.float64) / 255.0
        data = _LUMA[0] * rgb[..., 0] + _LUMA[1] * rgb[..., 1] + _LUMA[2] * rgb[..., 2]
    elif im.mode == "L":
        data = np.asarray(im, dtype=np.float64) / 255.0
    else:
        raise UnsupportedImageFormat(f"{path}: mode {im.mode} not supported (8-bit only)")
    return GrayImage(data)


def save_png(img: GrayImage, path) -> None:
    """Write an image as 8-bit grayscale PNG (round-trips through load_image)."""
    arr = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")
