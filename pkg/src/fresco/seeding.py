"""Seed fragment ranking: S(f) = alpha * P(f) + (1 - alpha) * C(f).

P is a binary cue for architectural borders: 1 when the boundary band of the
fragment contains two detected line segments, one running along the contour
(within a fixed 5 degree tolerance of the local tangent) and the other at
90 +- 5 degrees to it. Lines come from a small Hough transform implemented
here directly over a band-restricted edge map, so vote counts and peak order
are fully deterministic.

C measures chromatic variety: the occupancy ratio of a 2-D hue x saturation
histogram over the band, with near-black pixels excluded (hue is meaningless
there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np

from .compat import _filled_rgb
from .errors import ValidationError
from .model import Fragment, PuzzleDataset

PERP_TOLERANCE_DEG = 5.0  # fixed; both the along-boundary and the 90-degree test
_SEGMENT_GAP_PX = 3.0  # collinear pixels further apart than this split segments
_MIN_VALUE = 0.1  # HSV value floor below which hue is treated as undefined
_TANGENT_HALF_WINDOW = 3  # 7-pixel contour window for tangent estimation


@dataclass(frozen=True)
class SeedConfig:
    alpha: float = 0.5
    band_width_px: int = 12
    rho_res_px: float = 1.0
    theta_res_deg: float = 1.0
    vote_threshold: int = 30
    min_line_len_px: int = 15
    hist_bins: tuple[int, int] = (30, 32)  # (hue, saturation)
    top_k: int = 5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must be in [0, 1]")
        if min(self.band_width_px, self.vote_threshold, self.min_line_len_px,
               self.top_k, *self.hist_bins) <= 0:
            raise ValidationError("seed parameters must be positive")
        if self.rho_res_px <= 0 or self.theta_res_deg <= 0:
            raise ValidationError("hough resolutions must be positive")


@dataclass(frozen=True)
class SeedEntry:
    fragment_id: int
    p: int
    c: float
    s: float
    proposed: bool


@dataclass(frozen=True)
class SeedRanking:
    entries: tuple[SeedEntry, ...]
    alpha: float
    top_k: int

    def proposals(self) -> list[int]:
        return [e.fragment_id for e in self.entries if e.proposed]

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "top_k": self.top_k,
                "entries": [{"fragment": e.fragment_id, "P": e.p, "C": e.c,
                             "S": e.s, "proposed": e.proposed}
                            for e in self.entries]}


@dataclass(frozen=True)
class _Segment:
    angle_deg: float  # line direction, in [0, 180)
    length: float
    mid_x: float
    mid_y: float


def _angle_dist(a: float, b: float) -> float:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _band_edges(frag: Fragment, cfg: SeedConfig) -> tuple[np.ndarray, np.ndarray]:
    """Edge pixels inside the boundary band: gradient magnitude at or above
    the 90th percentile of the band. Returns (ys, xs)."""
    band = frag.boundary_band(cfg.band_width_px)
    gray = cv2.cvtColor(_filled_rgb(frag), cv2.COLOR_RGB2GRAY)
    gx = cv2.Sobel(gray, cv2.CV_32F, 1, 0, ksize=3)
    gy = cv2.Sobel(gray, cv2.CV_32F, 0, 1, ksize=3)
    mag = np.hypot(gx, gy)
    vals = mag[band]
    if vals.size == 0:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    cut = max(float(np.percentile(vals, 90)), 1e-3)
    edges = band & (mag >= cut)
    return np.nonzero(edges)


def _hough_segments(ys: np.ndarray, xs: np.ndarray, cfg: SeedConfig,
                    max_peaks: int = 64) -> list[_Segment]:
    """Peak lines in (rho, theta) space, then contiguous pixel runs on each
    peak line; runs shorter than min_line_len_px are discarded."""
    if xs.size == 0:
        return []
    n_theta = int(round(180.0 / cfg.theta_res_deg))
    thetas = np.deg2rad(np.arange(n_theta) * cfg.theta_res_deg)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    rho_max = float(np.hypot(xs.max() + 1, ys.max() + 1))
    n_rho = 2 * int(math.ceil(rho_max / cfg.rho_res_px)) + 1

    acc = np.zeros((n_theta, n_rho), dtype=np.int32)
    xs_f, ys_f = xs.astype(np.float64), ys.astype(np.float64)
    for t in range(n_theta):
        rho = xs_f * cos_t[t] + ys_f * sin_t[t]
        idx = np.round(rho / cfg.rho_res_px).astype(np.int64) + n_rho // 2
        acc[t] += np.bincount(idx, minlength=n_rho)

    peaks = np.argwhere(acc >= cfg.vote_threshold)
    if peaks.size == 0:
        return []
    votes = acc[peaks[:, 0], peaks[:, 1]]
    order = np.lexsort((peaks[:, 1], peaks[:, 0], -votes))
    segments: list[_Segment] = []
    for t, r in peaks[order][:max_peaks]:
        theta = thetas[t]
        rho = (r - n_rho // 2) * cfg.rho_res_px
        on_line = np.abs(xs_f * cos_t[t] + ys_f * sin_t[t] - rho) <= max(cfg.rho_res_px, 1.0)
        if not on_line.any():
            continue
        proj = -xs_f[on_line] * sin_t[t] + ys_f[on_line] * cos_t[t]
        sel = np.argsort(proj, kind="stable")
        proj, px, py = proj[sel], xs_f[on_line][sel], ys_f[on_line][sel]
        breaks = np.nonzero(np.diff(proj) > _SEGMENT_GAP_PX)[0]
        start = 0
        for stop in list(breaks + 1) + [proj.size]:
            length = proj[stop - 1] - proj[start]
            if length >= cfg.min_line_len_px:
                segments.append(_Segment(
                    angle_deg=(math.degrees(theta) + 90.0) % 180.0,
                    length=float(length),
                    mid_x=float(px[start:stop].mean()),
                    mid_y=float(py[start:stop].mean())))
            start = stop
    return segments


def _contour_tangents(frag: Fragment) -> tuple[np.ndarray, np.ndarray]:
    """Outer contour points (N, 2) and the tangent angle at each, from a
    7-pixel window along the contour."""
    contours, _ = cv2.findContours(frag.mask.astype(np.uint8), cv2.RETR_EXTERNAL,
                                   cv2.CHAIN_APPROX_NONE)
    pts = max(contours, key=len).reshape(-1, 2).astype(np.float64)  # (x, y)
    n = len(pts)
    ahead = pts[(np.arange(n) + _TANGENT_HALF_WINDOW) % n]
    behind = pts[(np.arange(n) - _TANGENT_HALF_WINDOW) % n]
    diff = ahead - behind
    angles = np.degrees(np.arctan2(diff[:, 1], diff[:, 0])) % 180.0
    return pts, angles


def perpendicularity_score(frag: Fragment, cfg: SeedConfig) -> int:
    """1 iff some detected segment runs along the boundary and another meets
    it at 90 +- 5 degrees; else 0."""
    ys, xs = _band_edges(frag, cfg)
    segments = _hough_segments(ys, xs, cfg)
    if len(segments) < 2:
        return 0
    pts, tangents = _contour_tangents(frag)
    along = []
    for seg in segments:
        d2 = (pts[:, 0] - seg.mid_x) ** 2 + (pts[:, 1] - seg.mid_y) ** 2
        tangent = tangents[int(np.argmin(d2))]
        along.append(_angle_dist(seg.angle_deg, tangent) <= PERP_TOLERANCE_DEG)
    for i, seg in enumerate(segments):
        if not along[i]:
            continue
        for j, other in enumerate(segments):
            if j != i and abs(_angle_dist(seg.angle_deg, other.angle_deg) - 90.0) \
                    <= PERP_TOLERANCE_DEG:
                return 1
    return 0


def color_diversity_score(frag: Fragment, cfg: SeedConfig) -> float:
    """Occupied-bin ratio of the hue x saturation histogram over the band."""
    band = frag.boundary_band(cfg.band_width_px)
    rgb = frag.image[:, :, :3].astype(np.float32) / 255.0
    hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)  # H in [0, 360), S and V in [0, 1]
    h = hsv[:, :, 0][band]
    s = hsv[:, :, 1][band]
    v = hsv[:, :, 2][band]
    keep = v >= _MIN_VALUE
    if not keep.any():
        return 0.0
    hue_bins, sat_bins = cfg.hist_bins
    hb = np.minimum((h[keep] / 360.0 * hue_bins).astype(np.int64), hue_bins - 1)
    sb = np.minimum((s[keep] * sat_bins).astype(np.int64), sat_bins - 1)
    occupied = np.unique(hb * sat_bins + sb).size
    return occupied / (hue_bins * sat_bins)


def rank_seeds(puzzle: PuzzleDataset, cfg: Optional[SeedConfig] = None) -> SeedRanking:
    """Rank all fragments by S descending, ties by id; flag the top_k."""
    cfg = cfg or SeedConfig()
    scored = []
    for frag in puzzle.fragments:
        p = perpendicularity_score(frag, cfg)
        c = color_diversity_score(frag, cfg)
        scored.append((frag.id, p, c, cfg.alpha * p + (1.0 - cfg.alpha) * c))
    scored.sort(key=lambda row: (-row[3], row[0]))
    entries = tuple(SeedEntry(fid, p, c, s, rank < cfg.top_k)
                    for rank, (fid, p, c, s) in enumerate(scored))
    return SeedRanking(entries, cfg.alpha, cfg.top_k)
