"""Synthetic irregular-puzzle generation and a best-effort external importer.

A source image is partitioned into Voronoi cells of random sites, each cell
optionally eroded along the cut lines (a gap of roughly twice the erosion
grows between neighbors, standing in for lost material), and some pieces
optionally dropped. Every fragment's anchor is set to the position of its
ground-truth cell center in fragment-local coordinates, so the ground-truth
pose reproduces the source partition exactly on the pose grid; with the even
cell size and 90-degree rotation steps chosen here all placements stay on
integer pixels.

All randomness flows from one seeded generator, so a fixed rng_seed yields a
bit-identical dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

from .errors import PuzzleFormatError, ValidationError
from .model import (Board, Fragment, Pose, PuzzleDataset, _FOUR_CONN,
                    default_cell_size, save_puzzle)

_PATTERNS = ("stripes", "mosaic")
_STRIPE_PALETTE = np.array([
    [200, 60, 50], [60, 120, 200], [230, 190, 60], [70, 170, 90],
    [160, 80, 180], [230, 130, 40], [90, 200, 200], [210, 210, 200],
], dtype=np.uint8)


@dataclass(frozen=True)
class GenConfig:
    n_fragments: int = 12
    erosion_px: int = 0
    drop_fraction: float = 0.0
    rng_seed: int = 0
    source_image: Optional[str] = None  # falls back to `pattern` when None
    pattern: str = "mosaic"
    size: tuple[int, int] = (640, 480)  # pattern canvas (width, height)
    n_rotations: int = 4
    min_fragment_px: int = 50

    def __post_init__(self):
        if self.n_fragments < 2:
            raise ValidationError("n_fragments must be at least 2")
        if self.erosion_px < 0:
            raise ValidationError("erosion_px must be nonnegative")
        if not 0.0 <= self.drop_fraction < 1.0:
            raise ValidationError("drop_fraction must be in [0, 1)")
        if self.source_image is None and self.pattern not in _PATTERNS:
            raise ValidationError(f"pattern must be one of {_PATTERNS}")
        if self.n_rotations < 1:
            raise ValidationError("n_rotations must be positive")


def _pattern_stripes(w: int, h: int, rng: np.random.Generator) -> np.ndarray:
    width = int(rng.integers(40, 71))
    x = np.arange(w)[None, :]
    y = np.arange(h)[:, None]
    diag = x + y
    img = _STRIPE_PALETTE[(diag // width) % len(_STRIPE_PALETTE)]
    img = np.broadcast_to(img, (h, w, 3)).copy()
    img[(diag % width) < 2] = (25, 25, 25)  # dark seams give strong gradients
    return img


def _pattern_mosaic(w: int, h: int, rng: np.random.Generator) -> np.ndarray:
    k = 40
    sites = rng.uniform((0, 0), (w, h), size=(k, 2))
    colors = (40 + rng.integers(0, 216, size=(k, 3))).astype(np.uint8)
    labels = _nearest_site_labels(w, h, sites)
    return colors[labels]


def _nearest_site_labels(w: int, h: int, sites: np.ndarray) -> np.ndarray:
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    best = np.full((h, w), np.inf)
    labels = np.zeros((h, w), dtype=np.int32)
    for i, (sx, sy) in enumerate(sites):
        d = (xs - sx) ** 2 + (ys - sy) ** 2
        closer = d < best
        best[closer] = d[closer]
        labels[closer] = i
    return labels


def _sample_sites(rng: np.random.Generator, w: int, h: int, n: int) -> np.ndarray:
    # rejection sampling keeps cells from degenerating into slivers
    min_d = 0.4 * math.sqrt(w * h / n)
    lo, hi = np.array([0.05 * w, 0.05 * h]), np.array([0.95 * w, 0.95 * h])
    sites: list[np.ndarray] = []
    for _ in range(10_000):
        if len(sites) == n:
            break
        p = rng.uniform(lo, hi)
        if all(float(np.hypot(*(p - q))) >= min_d for q in sites):
            sites.append(p)
    while len(sites) < n:
        sites.append(rng.uniform(lo, hi))
    return np.array(sites)


def _load_source(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.source_image is not None:
        raw = cv2.imread(str(cfg.source_image), cv2.IMREAD_COLOR)
        if raw is None:
            raise PuzzleFormatError(f"cannot read source image {cfg.source_image}")
        return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    w, h = cfg.size
    if cfg.pattern == "stripes":
        return _pattern_stripes(w, h, rng)
    return _pattern_mosaic(w, h, rng)


def generate_puzzle(cfg: GenConfig, out_dir: Optional[str | Path] = None) -> PuzzleDataset:
    """Build (and optionally write) a random irregular puzzle with ground truth."""
    rng = np.random.default_rng(cfg.rng_seed)
    image = _load_source(cfg, rng)
    h, w = image.shape[:2]
    sites = _sample_sites(rng, w, h, cfg.n_fragments)
    labels = _nearest_site_labels(w, h, sites)

    regions = []
    for i in range(cfg.n_fragments):
        region = labels == i
        if cfg.erosion_px > 0:
            region = ndimage.distance_transform_edt(region) > cfg.erosion_px
            lab, n_comp = ndimage.label(region, structure=_FOUR_CONN)
            if n_comp > 1:  # erosion pinched the cell apart: keep the biggest part
                sizes = np.bincount(lab.ravel())[1:]
                region = lab == (int(np.argmax(sizes)) + 1)
        if int(region.sum()) < cfg.min_fragment_px:
            raise ValidationError(
                f"region {i} has {int(region.sum())} px (< {cfg.min_fragment_px}); "
                "reduce n_fragments or erosion_px")
        regions.append(region)

    crops = []
    for i, region in enumerate(regions):
        ys, xs = np.nonzero(region)
        x0, y0, x1, y1 = xs.min(), ys.min(), xs.max(), ys.max()
        mask = region[y0:y1 + 1, x0:x1 + 1]
        rgba = np.zeros((mask.shape[0], mask.shape[1], 4), dtype=np.uint8)
        rgba[:, :, :3] = np.where(mask[:, :, None], image[y0:y1 + 1, x0:x1 + 1], 0)
        rgba[:, :, 3] = np.where(mask, 255, 0)
        crops.append((i, rgba, mask, int(x0), int(y0)))

    mean_diag = float(np.mean([math.hypot(m.shape[1], m.shape[0])
                               for _, _, m, _, _ in crops]))
    cs = max(4, round(0.25 * mean_diag))
    cs += cs % 2  # even pitch keeps cell centers on integer pixels

    cells_w, cells_h = math.ceil(w / cs), math.ceil(h / cs)
    side = 2 * max(cells_w, cells_h) + 3  # square board, source centered
    board = Board(cols=side, rows=side, cell_size_px=cs)
    margin_x, margin_y = (side - cells_w) // 2, (side - cells_h) // 2

    n_drop = math.floor(cfg.drop_fraction * cfg.n_fragments)
    dropped = set(rng.choice(cfg.n_fragments, size=n_drop, replace=False).tolist()) \
        if n_drop else set()

    fragments, gt = [], {}
    for i, rgba, mask, x0, y0 in crops:
        if i in dropped:
            continue
        ys_m, xs_m = np.nonzero(mask)
        gcx, gcy = float(xs_m.mean()) + x0, float(ys_m.mean()) + y0
        cell_x, cell_y = int(gcx // cs), int(gcy // cs)
        # anchor = that cell's center in local coords, so the GT pose lands
        # the crop exactly back on its source position
        anchor = ((cell_x + 0.5) * cs - x0, (cell_y + 0.5) * cs - y0)
        fragments.append(Fragment(i, rgba, mask, anchor=anchor))
        gt[i] = Pose(margin_x + cell_x, margin_y + cell_y, 0)

    rotations = tuple(i * 360.0 / cfg.n_rotations for i in range(cfg.n_rotations))
    dataset = PuzzleDataset(
        fragments=fragments, board=board, rotations=rotations, ground_truth=gt,
        provenance={"kind": "generated", "rng_seed": cfg.rng_seed,
                    "pattern": None if cfg.source_image else cfg.pattern,
                    "n_fragments": cfg.n_fragments, "erosion_px": cfg.erosion_px,
                    "drop_fraction": cfg.drop_fraction})
    if out_dir is not None:
        save_puzzle(dataset, out_dir)
    return dataset


def import_fragment_archive(root: str | Path, n_rotations: int = 8,
                            cell_size_px: Optional[int] = None) -> PuzzleDataset:
    """Best-effort import of an external fragment archive.

    Expected layout: `<root>/transforms.json` with
    `{"fragments": [{"image": "...", "x": ..., "y": ..., "theta_deg": ...}]}`
    where (x, y) is the global centroid position in pixels. Poses are snapped
    to the nearest grid cell and rotation step, so the resulting ground truth
    is approximate; it is not validated for overlap.
    """
    root = Path(root)
    meta_path = root / "transforms.json"
    if not meta_path.is_file():
        raise PuzzleFormatError(f"missing {meta_path}")
    import json
    doc = json.loads(meta_path.read_text())
    entries = doc["fragments"] if isinstance(doc, dict) else doc
    if not entries:
        raise PuzzleFormatError("archive lists no fragments")

    fragments, raw_poses = [], []
    for idx, entry in enumerate(entries):
        raw = cv2.imread(str(root / entry["image"]), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise PuzzleFormatError(f"cannot read {root / entry['image']}")
        if raw.ndim == 3 and raw.shape[2] == 4:
            rgba = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGBA)
            mask = rgba[:, :, 3] > 127
        else:
            rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
            mask = rgb.any(axis=2)
            rgba = np.dstack([rgb, np.where(mask, 255, 0).astype(np.uint8)])
        fragments.append(Fragment(idx, rgba, mask))
        raw_poses.append((float(entry["x"]), float(entry["y"]),
                          float(entry.get("theta_deg", 0.0))))

    cs = cell_size_px or default_cell_size(fragments)
    step = 360.0 / n_rotations
    cells = [(int(round(x / cs - 0.5)), int(round(y / cs - 0.5)),
              int(round(theta / step)) % n_rotations) for x, y, theta in raw_poses]
    shift_x = max(0, 2 - min(c[0] for c in cells))
    shift_y = max(0, 2 - min(c[1] for c in cells))
    cells = [(x + shift_x, y + shift_y, t) for x, y, t in cells]
    board = Board(cols=max(c[0] for c in cells) + 3,
                  rows=max(c[1] for c in cells) + 3, cell_size_px=cs)
    gt = {f.id: Pose(*cell) for f, cell in zip(fragments, cells)}
    rotations = tuple(i * step for i in range(n_rotations))
    return PuzzleDataset(fragments=fragments, board=board, rotations=rotations,
                         ground_truth=gt, provenance={"kind": "imported"})
