"""Assembly evaluation invariant to global rigid transforms, plus reporting.

Q_pos: the best global transform (rotation restricted to the puzzle's
rotation set, translation continuous and closed-form) is found by weighted
Procrustes over fragment centroids; after alignment each fragment contributes
|placed mask AND ground-truth mask| / |ground-truth mask|, averaged with
area weights. RMSE_px is the area-weighted RMS centroid error after the same
alignment. Larger fragments therefore dominate both numbers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import cv2
import numpy as np

from .errors import ValidationError
from .model import Pose, PuzzleDataset, _pose_transform


@dataclass(frozen=True)
class FragmentEval:
    fragment_id: int
    overlap: float
    centroid_err_px: float
    weight: float


@dataclass(frozen=True)
class EvalReport:
    q_pos: float
    rmse_px: float
    aligned_rotation_deg: float
    aligned_translation_px: tuple[float, float]
    per_fragment: tuple[FragmentEval, ...]
    partial: bool

    def to_json(self) -> dict:
        return {"q_pos": self.q_pos, "rmse_px": self.rmse_px,
                "aligned_rotation_deg": self.aligned_rotation_deg,
                "aligned_translation_px": list(self.aligned_translation_px),
                "partial": self.partial,
                "per_fragment": [{"fragment": f.fragment_id, "overlap": f.overlap,
                                  "centroid_err_px": f.centroid_err_px,
                                  "weight": f.weight} for f in self.per_fragment]}


def _rot_matrix(deg: float) -> np.ndarray:
    # same orientation convention as the rasterizer (image coords, y down)
    a, b = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[a, b], [-b, a]])


def _placed_centroid(m: np.ndarray, centroid: tuple[float, float]) -> np.ndarray:
    return m @ np.array([centroid[0], centroid[1], 1.0])


def _overlap_ratio(mask: np.ndarray, m_pred: np.ndarray, m_gt: np.ndarray) -> float:
    """|pred AND gt| / |gt| with both placements rasterized into one window
    large enough for either, so off-board spill still counts."""
    h, w = mask.shape
    corners = np.array([[0, 0, 1], [w, 0, 1], [0, h, 1], [w, h, 1]], dtype=np.float64)
    pts = np.vstack([corners @ m_pred.T, corners @ m_gt.T])
    x0, y0 = np.floor(pts.min(axis=0)).astype(int) - 2
    x1, y1 = np.ceil(pts.max(axis=0)).astype(int) + 2
    size = (x1 - x0, y1 - y0)
    shift = np.array([[0.0, 0.0, -x0], [0.0, 0.0, -y0]])
    src = mask.astype(np.uint8)
    placed_pred = cv2.warpAffine(src, m_pred + shift, size, flags=cv2.INTER_NEAREST,
                                 borderValue=0)
    placed_gt = cv2.warpAffine(src, m_gt + shift, size, flags=cv2.INTER_NEAREST,
                               borderValue=0)
    n_gt = int(np.count_nonzero(placed_gt))
    if n_gt == 0:
        return 0.0
    return int(np.count_nonzero(placed_pred.astype(bool) & placed_gt.astype(bool))) / n_gt


def evaluate(puzzle: PuzzleDataset, assembly: Mapping[int, Pose]) -> EvalReport:
    """Score an assembly against ground truth, up to a global rigid transform.

    A partial assembly evaluates only the covered fragments and flags the
    report as partial.
    """
    if not puzzle.ground_truth:
        raise ValidationError("puzzle has no ground truth to evaluate against")
    ids = [fid for fid in puzzle.fragment_ids if fid in assembly]
    if not ids:
        raise ValidationError("assembly covers no fragment of the puzzle")
    unknown = set(assembly) - set(puzzle.fragment_ids)
    if unknown:
        raise ValidationError(f"assembly names unknown fragments {sorted(unknown)}")

    board, rotations = puzzle.board, puzzle.rotations
    frags = [puzzle.fragment(fid) for fid in ids]
    transforms_pred = [_pose_transform(f, assembly[f.id], board, rotations) for f in frags]
    transforms_gt = [_pose_transform(f, puzzle.ground_truth[f.id], board, rotations)
                     for f in frags]
    pred = np.array([_placed_centroid(m, f.centroid)
                     for m, f in zip(transforms_pred, frags)])
    gt = np.array([_placed_centroid(m, f.centroid)
                   for m, f in zip(transforms_gt, frags)])
    weights = np.array([f.area for f in frags], dtype=np.float64)
    wsum = weights.sum()

    best = None
    for r_idx, deg in enumerate(rotations):
        rot = _rot_matrix(deg)
        rotated = pred @ rot.T
        t = (weights @ (gt - rotated)) / wsum
        sse = float(weights @ ((rotated + t - gt) ** 2).sum(axis=1))
        if best is None or sse < best[0]:
            best = (sse, r_idx, rot, t)
    sse, r_idx, rot, t = best
    rmse = math.sqrt(sse / wsum)

    per = []
    for frag, m_pred, m_gt, c_pred, c_gt in zip(frags, transforms_pred, transforms_gt,
                                                pred, gt):
        m_aligned = np.hstack([rot @ m_pred[:, :2],
                               (rot @ m_pred[:, 2] + t).reshape(2, 1)])
        overlap = _overlap_ratio(frag.mask, m_aligned, m_gt)
        err = float(np.linalg.norm(rot @ c_pred + t - c_gt))
        per.append(FragmentEval(frag.id, overlap, err, float(frag.area)))

    q_pos = float(sum(f.weight * f.overlap for f in per) / wsum)
    return EvalReport(q_pos=q_pos, rmse_px=rmse,
                      aligned_rotation_deg=float(rotations[r_idx]),
                      aligned_translation_px=(float(t[0]), float(t[1])),
                      per_fragment=tuple(per),
                      partial=len(ids) < len(puzzle.fragment_ids))


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    group: str
    solver: str
    time_s: Optional[float]
    q_pos: Optional[float]
    rmse_px: Optional[float]


def _fmt(value: Optional[float], spec: str) -> str:
    return "N/A" if value is None else format(value, spec)


def emit_report(rows: Sequence[BenchRow]) -> tuple[str, str]:
    """Render benchmark rows as (text table, CSV). Missing cells print N/A."""
    if not rows:
        raise ValidationError("no rows to report")
    header = ("Group", "Solver", "Time (s)", "Q-Pos", "RMSE (px)")
    body = [(r.group, r.solver, _fmt(r.time_s, ".3g"), _fmt(r.q_pos, ".3f"),
             _fmt(r.rmse_px, ".3g")) for r in rows]
    widths = [max(len(h), *(len(b[c]) for b in body)) for c, h in enumerate(header)]
    lines = ["  ".join(h.ljust(widths[c]) for c, h in enumerate(header)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row))
              for row in body]
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([r.group, r.solver,
                         "N/A" if r.time_s is None else repr(r.time_s),
                         "N/A" if r.q_pos is None else repr(r.q_pos),
                         "N/A" if r.rmse_px is None else repr(r.rmse_px)])
    return text, buf.getvalue()
