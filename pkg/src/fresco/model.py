"""Puzzle data model: fragments, board grid, discrete pose spaces, on-disk format.

A puzzle directory looks like:

    puzzle.json     manifest (board, rotations, fragment list, optional ground truth)
    pieces/<id>.png one RGBA image per fragment; alpha > 127 marks fragment material

Everything downstream (compatibility, solver, sessions, metrics) consumes the
types defined here and treats them as immutable after construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import cv2
import numpy as np
from scipy import ndimage

from .errors import PuzzleFormatError, ValidationError

# Tolerated ground-truth mask overlap, as a fraction of the smaller mask's area.
# compat.CompatConfig reuses this default for its hard overlap veto.
DEFAULT_OVERLAP_EPSILON = 0.02

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


@dataclass(frozen=True, order=True)
class Pose:
    """A discrete placement: grid cell (x, y) plus a rotation index."""

    x: int
    y: int
    theta: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Board:
    """Board grid: cols x rows cells at a fixed pixel pitch."""

    cols: int
    rows: int
    cell_size_px: int

    def __post_init__(self):
        if self.cols <= 0 or self.rows <= 0 or self.cell_size_px <= 0:
            raise ValidationError(f"board dimensions must be positive, got {self}")

    @property
    def width_px(self) -> int:
        return self.cols * self.cell_size_px

    @property
    def height_px(self) -> int:
        return self.rows * self.cell_size_px

    def cell_center(self, x: int, y: int) -> tuple[float, float]:
        cs = self.cell_size_px
        return ((x + 0.5) * cs, (y + 0.5) * cs)

    def contains_cell(self, x: int, y: int) -> bool:
        return 0 <= x < self.cols and 0 <= y < self.rows


class Fragment:
    """One puzzle piece: RGBA raster, binary mask, and derived geometry.

    `centroid` is the mask center of mass (local pixel coords).  `anchor` is
    the point that rasterize() pins to a cell center and rotates about; it
    defaults to the centroid.  Generated datasets override it so that
    ground-truth placements land exactly on the pose grid.
    """

    def __init__(self, frag_id: int, image: np.ndarray, mask: np.ndarray,
                 anchor: Optional[Sequence[float]] = None):
        if image.ndim != 3 or image.shape[2] != 4:
            raise ValidationError(f"fragment {frag_id}: image must be RGBA (HxWx4)")
        if mask.shape != image.shape[:2]:
            raise ValidationError(
                f"fragment {frag_id}: mask {mask.shape} does not match image {image.shape[:2]}")
        mask = mask.astype(bool)
        if not mask.any():
            raise ValidationError(f"fragment {frag_id}: mask is empty")
        n_comp = ndimage.label(mask, structure=_FOUR_CONN)[1]
        if n_comp != 1:
            raise ValidationError(
                f"fragment {frag_id}: mask has {n_comp} 4-connected components, expected 1")

        self.id = int(frag_id)
        self.image = np.ascontiguousarray(image, dtype=np.uint8)
        self.mask = np.ascontiguousarray(mask)
        ys, xs = np.nonzero(self.mask)
        self.centroid = np.array([xs.mean(), ys.mean()], dtype=np.float64)  # (x, y)
        self.anchor = (self.centroid.copy() if anchor is None
                       else np.asarray(anchor, dtype=np.float64))
        self.bbox = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        if not (self.bbox[0] <= self.centroid[0] <= self.bbox[2]
                and self.bbox[1] <= self.centroid[1] <= self.bbox[3]):
            raise ValidationError(f"fragment {frag_id}: centroid outside mask bbox")
        self.area = int(self.mask.sum())
        for arr in (self.image, self.mask, self.centroid, self.anchor):
            arr.flags.writeable = False
        self._bands: dict[int, np.ndarray] = {}

    def boundary_band(self, d: int) -> np.ndarray:
        """Mask pixels within d pixels (Euclidean) of the outer contour."""
        if d not in self._bands:
            # pad so mask pixels on the canvas edge count as boundary too
            padded = np.pad(self.mask, 1)
            dist_in = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
            band = self.mask & (dist_in <= d)
            if not band.any():  # thinner than the band: clamp to whole mask
                band = self.mask.copy()
            band.flags.writeable = False
            self._bands[d] = band
        return self._bands[d]

    @property
    def bbox_diagonal(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return math.hypot(x1 - x0 + 1, y1 - y0 + 1)

    def __repr__(self):
        return f"Fragment(id={self.id}, {self.mask.shape[1]}x{self.mask.shape[0]}, area={self.area})"


@dataclass(frozen=True)
class StrategySpace:
    """Ordered, deterministic list of admissible poses for one fragment.

    Ordering is row-major (y, then x, then theta) so strategy indices are
    stable across runs. Poses appended by session corrections keep their
    insertion position at the tail.
    """

    player: int
    poses: tuple[Pose, ...]
    cell_size_px: int
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.poses:
            raise ValidationError(f"player {self.player}: empty strategy space")
        self._index.update({p: i for i, p in enumerate(self.poses)})
        if len(self._index) != len(self.poses):
            raise ValidationError(f"player {self.player}: duplicate poses in strategy space")

    def __len__(self) -> int:
        return len(self.poses)

    def index_of(self, pose: Pose) -> int:
        try:
            return self._index[pose]
        except KeyError:
            raise ValidationError(f"pose {pose} not in strategy space of player {self.player}")

    def __contains__(self, pose: Pose) -> bool:
        return pose in self._index

    def with_extra_pose(self, pose: Pose) -> "StrategySpace":
        """New space with `pose` appended (used for manual corrections)."""
        if pose in self._index:
            return self
        return StrategySpace(self.player, self.poses + (pose,), self.cell_size_px)


@dataclass
class PuzzleDataset:
    """A loaded puzzle: fragments + board + rotation set + optional ground truth."""

    fragments: list[Fragment]
    board: Board
    rotations: tuple[float, ...]
    ground_truth: Optional[dict[int, Pose]] = None
    provenance: object = ""

    def __post_init__(self):
        ids = [f.id for f in self.fragments]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate fragment ids")
        self.fragments = sorted(self.fragments, key=lambda f: f.id)
        n = len(self.rotations)
        if n == 0:
            raise ValidationError("rotation set is empty")
        step = 360.0 / n
        for i, deg in enumerate(self.rotations):
            if abs(deg - i * step) > 1e-9:
                raise ValidationError(
                    f"rotations must be uniform steps of {step} deg, got {self.rotations}")
        if self.ground_truth is not None:
            if set(self.ground_truth) != set(ids):
                raise ValidationError("ground truth must cover every fragment id exactly once")
            for fid, pose in self.ground_truth.items():
                self._check_pose(fid, pose)

    def _check_pose(self, fid: int, pose: Pose):
        if not self.board.contains_cell(pose.x, pose.y):
            raise ValidationError(f"fragment {fid}: ground-truth cell {pose} outside board")
        if not 0 <= pose.theta < len(self.rotations):
            raise ValidationError(f"fragment {fid}: theta index {pose.theta} out of range")

    def fragment(self, fid: int) -> Fragment:
        for f in self.fragments:
            if f.id == fid:
                return f
        raise ValidationError(f"unknown fragment id {fid}")

    @property
    def fragment_ids(self) -> list[int]:
        return [f.id for f in self.fragments]

    def rotation_deg(self, theta: int) -> float:
        return self.rotations[theta]


def default_cell_size(fragments: Sequence[Fragment]) -> int:
    """Grid pitch: round(0.25 x mean fragment bbox diagonal), at least 4 px."""
    diag = float(np.mean([f.bbox_diagonal for f in fragments]))
    return max(4, round(0.25 * diag))


def build_strategy_space(fragment: Fragment, board: Board, rotations: Sequence[float],
                         restriction: Optional[Iterable[tuple[int, int]]] = None) -> StrategySpace:
    """Full (or cell-restricted) pose grid for one fragment, row-major order."""
    if not rotations:
        raise ValidationError("rotation set is empty")
    n_rot = len(rotations)
    if restriction is None:
        cells = [(x, y) for y in range(board.rows) for x in range(board.cols)]
    else:
        cells = sorted(set(restriction), key=lambda c: (c[1], c[0]))
        if not cells:
            raise ValidationError(f"player {fragment.id}: empty strategy space")
        for x, y in cells:
            if not board.contains_cell(x, y):
                raise ValidationError(f"restriction cell ({x},{y}) outside board")
    poses = tuple(Pose(x, y, t) for x, y in cells for t in range(n_rot))
    return StrategySpace(fragment.id, poses, board.cell_size_px)


@dataclass
class PlacedRaster:
    """A fragment rendered into board pixel coordinates."""

    mask: np.ndarray   # bool, rows_px x cols_px
    image: np.ndarray  # uint8 RGBA


def _pose_transform(fragment: Fragment, pose: Pose, board: Board,
                    rotations: Sequence[float]) -> np.ndarray:
    """2x3 affine: rotate about the anchor, then move the anchor to the cell center."""
    deg = rotations[pose.theta]
    ax, ay = fragment.anchor
    m = cv2.getRotationMatrix2D((float(ax), float(ay)), deg, 1.0)
    cx, cy = board.cell_center(pose.x, pose.y)
    m[0, 2] += cx - ax
    m[1, 2] += cy - ay
    return m


def rasterize(fragment: Fragment, pose: Pose, board: Board,
              rotations: Sequence[float]) -> PlacedRaster:
    """Place a fragment on the board canvas at the given pose.

    Nearest-neighbor for the mask (keeps it binary), bilinear for the image.
    Material overhanging the board canvas is clipped.
    """
    if not board.contains_cell(pose.x, pose.y):
        raise ValidationError(f"pose {pose} outside board {board.cols}x{board.rows}")
    if not 0 <= pose.theta < len(rotations):
        raise ValidationError(f"theta index {pose.theta} out of range")
    m = _pose_transform(fragment, pose, board, rotations)
    size = (board.width_px, board.height_px)
    mask = cv2.warpAffine(fragment.mask.astype(np.uint8), m, size,
                          flags=cv2.INTER_NEAREST, borderValue=0)
    image = cv2.warpAffine(fragment.image, m, size,
                           flags=cv2.INTER_LINEAR, borderValue=(0, 0, 0, 0))
    return PlacedRaster(mask=mask.astype(bool), image=image)


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------

def load_puzzle(path: str | Path, validate_ground_truth: bool = True) -> PuzzleDataset:
    """Load a puzzle directory; validates all structural invariants."""
    root = Path(path)
    manifest_path = root / "puzzle.json"
    if not manifest_path.is_file():
        raise PuzzleFormatError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise PuzzleFormatError(f"unreadable manifest: {exc}") from exc

    for key in ("board", "rotations", "fragments"):
        if key not in manifest:
            raise PuzzleFormatError(f"manifest missing required key '{key}'")
    b = manifest["board"]
    fragments = []
    for entry in manifest["fragments"]:
        fid = int(entry["id"])
        img_path = root / entry["image"]
        raw = cv2.imread(str(img_path), cv2.IMREAD_UNCHANGED)
        if raw is None:
            raise PuzzleFormatError(f"fragment {fid}: cannot read {img_path}")
        if raw.ndim != 3 or raw.shape[2] != 4:
            raise PuzzleFormatError(f"fragment {fid}: {img_path} is not RGBA")
        rgba = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGBA)
        mask = rgba[:, :, 3] > 127
        anchor = entry.get("anchor")
        fragments.append(Fragment(fid, rgba, mask, anchor=anchor))
    if not fragments:
        raise PuzzleFormatError("manifest lists no fragments")

    cell_size = b.get("cell_size_px") or default_cell_size(fragments)
    board = Board(cols=int(b["cols"]), rows=int(b["rows"]), cell_size_px=int(cell_size))
    rotations = tuple(float(r) for r in manifest["rotations"])
    gt = None
    if manifest.get("ground_truth") is not None:
        gt = {int(e["id"]): Pose(int(e["x"]), int(e["y"]), int(e["theta"]))
              for e in manifest["ground_truth"]}
    dataset = PuzzleDataset(fragments=fragments, board=board, rotations=rotations,
                            ground_truth=gt, provenance=manifest.get("provenance", ""))
    if gt is not None and validate_ground_truth:
        _check_ground_truth_overlap(dataset)
    return dataset


def _check_ground_truth_overlap(dataset: PuzzleDataset,
                                epsilon: float = DEFAULT_OVERLAP_EPSILON):
    """Ground-truth placements may overlap at most epsilon x smaller area, pairwise."""
    placed = {f.id: rasterize(f, dataset.ground_truth[f.id], dataset.board,
                              dataset.rotations).mask
              for f in dataset.fragments}
    ids = dataset.fragment_ids
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            inter = int((placed[i] & placed[j]).sum())
            limit = epsilon * min(int(placed[i].sum()), int(placed[j].sum()))
            if inter > limit:
                raise ValidationError(
                    f"ground-truth masks of fragments {i} and {j} overlap by "
                    f"{inter} px (limit {limit:.1f})")


def save_puzzle(dataset: PuzzleDataset, path: str | Path) -> Path:
    """Write a puzzle directory in the manifest format; returns the directory."""
    root = Path(path)
    (root / "pieces").mkdir(parents=True, exist_ok=True)
    entries = []
    for f in dataset.fragments:
        rgba = f.image.copy()
        rgba[:, :, 3] = np.where(f.mask, 255, 0).astype(np.uint8)
        rel = f"pieces/{f.id}.png"
        ok = cv2.imwrite(str(root / rel), cv2.cvtColor(rgba, cv2.COLOR_RGBA2BGRA))
        if not ok:
            raise PuzzleFormatError(f"failed to write {root / rel}")
        entry = {"id": f.id, "image": rel}
        if not np.array_equal(f.anchor, f.centroid):
            entry["anchor"] = [float(f.anchor[0]), float(f.anchor[1])]
        entries.append(entry)
    manifest = {
        "board": {"cols": dataset.board.cols, "rows": dataset.board.rows,
                  "cell_size_px": dataset.board.cell_size_px},
        "rotations": list(dataset.rotations),
        "fragments": entries,
        "provenance": dataset.provenance,
    }
    if dataset.ground_truth is not None:
        manifest["ground_truth"] = [
            {"id": fid, "x": p.x, "y": p.y, "theta": p.theta}
            for fid, p in sorted(dataset.ground_truth.items())]
    (root / "puzzle.json").write_text(json.dumps(manifest, indent=1))
    return root
