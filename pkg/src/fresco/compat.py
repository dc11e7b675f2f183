"""Pairwise placement compatibility and its sparse payoff store.

The score for two placed fragments fuses three cues, each in [0, 1]:

  shape  S: contact length between the placed masks, normalized by the
            smaller fragment's perimeter;
  color  E: exp(-mean CIE-Lab distance across the junction / sigma_color);
  motif  M: 1 - JSD(gradient-orientation histograms of the two
            contact-adjacent bands) / log 2.

Hard vetoes (score exactly 0): placed-mask overlap beyond a fraction of the
smaller area, or no contact within `contact_width_px`.

Scores are translation-equivariant: they depend only on the rotation pair and
the integer cell offset between the two anchors, never on the absolute board
position. The engine below exploits that by scoring each relative
configuration once, on per-(fragment, rotation) cached rasters, and the store
builder replicates the value across all board placements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import cv2
import numpy as np
from scipy import ndimage

from .errors import FrescoError, ValidationError
from .model import (DEFAULT_OVERLAP_EPSILON, Board, Fragment, Pose, PuzzleDataset,
                    StrategySpace)

_LOG2 = math.log(2.0)
_N_ORI_BINS = 8


@dataclass(frozen=True)
class CompatConfig:
    """Fusion parameters. Weights must sum to 1."""

    contact_width_px: int = 3
    overlap_epsilon: float = DEFAULT_OVERLAP_EPSILON
    sigma_color: float = 20.0
    weights: tuple[float, float, float] = (0.4, 0.4, 0.2)  # (shape, color, motif)
    interaction_radius_cells: Optional[int] = None  # None: ceil(max diam / cell) + 1
    score_floor: float = 1e-4

    def __post_init__(self):
        if self.contact_width_px <= 0 or self.sigma_color <= 0:
            raise ValidationError("contact_width_px and sigma_color must be positive")
        if not 0 <= self.overlap_epsilon < 1:
            raise ValidationError("overlap_epsilon must be in [0, 1)")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValidationError(f"weights must be nonnegative and sum to 1, got {self.weights}")

    def resolve_radius(self, fragments: Sequence[Fragment], cell_size_px: int) -> int:
        if self.interaction_radius_cells is not None:
            return self.interaction_radius_cells
        max_diam = max(f.bbox_diagonal for f in fragments)
        return math.ceil(max_diam / cell_size_px) + 1


class _FragTables:
    """Rasters and lookup tables for one fragment at one rotation.

    The canvas is padded by contact_width + 2 and positioned so the fragment
    anchor lies on an exact integer pixel; two tables then compare via pure
    integer offsets, which keeps scores bit-identical under translation.
    """

    def __init__(self, frag: Fragment, deg: float, pad: int, filled_rgb: np.ndarray):
        ax, ay = float(frag.anchor[0]), float(frag.anchor[1])
        rot = cv2.getRotationMatrix2D((ax, ay), deg, 1.0)
        x0, y0, x1, y1 = frag.bbox
        corners = np.array([[x0, y0, 1], [x1 + 1, y0, 1], [x0, y1 + 1, 1], [x1 + 1, y1 + 1, 1]],
                           dtype=np.float64)
        pts = corners @ rot.T
        min_x, min_y = pts[:, 0].min() - pad, pts[:, 1].min() - pad
        # shift the canvas origin so the anchor lands on an integer pixel
        self.anchor_x = math.ceil(ax - min_x)
        self.anchor_y = math.ceil(ay - min_y)
        origin = (ax - self.anchor_x, ay - self.anchor_y)
        m = rot.copy()
        m[0, 2] -= origin[0]
        m[1, 2] -= origin[1]
        w = int(math.ceil(pts[:, 0].max() + pad - origin[0])) + 1
        h = int(math.ceil(pts[:, 1].max() + pad - origin[1])) + 1

        mask_u8 = cv2.warpAffine(frag.mask.astype(np.uint8), m, (w, h),
                                 flags=cv2.INTER_NEAREST, borderValue=0)
        self.mask = mask_u8.astype(bool)
        self.area = int(self.mask.sum())
        rgb = cv2.warpAffine(filled_rgb, m, (w, h), flags=cv2.INTER_LINEAR, borderValue=0)
        self.lab = cv2.cvtColor(rgb, cv2.COLOR_RGB2Lab)

        edt, idx = ndimage.distance_transform_edt(~self.mask, return_indices=True)
        self.edt = edt.astype(np.float32)
        self.near_y = idx[0].astype(np.int32)
        self.near_x = idx[1].astype(np.int32)

        gray = cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY)
        gx = cv2.Sobel(gray, cv2.CV_32F, 1, 0, ksize=3)
        gy = cv2.Sobel(gray, cv2.CV_32F, 0, 1, ksize=3)
        self.grad_mag = np.hypot(gx, gy)
        ori = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned orientation
        self.grad_bin = np.minimum((ori / np.pi * _N_ORI_BINS).astype(np.int32),
                                   _N_ORI_BINS - 1)

        eroded = ndimage.binary_erosion(
            self.mask, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]), border_value=0)
        self.perimeter = int((self.mask & ~eroded).sum())
        ys, xs = np.nonzero(self.mask)
        self.radius = float(np.hypot(xs - self.anchor_x, ys - self.anchor_y).max())
        self.shape = self.mask.shape


def _filled_rgb(frag: Fragment) -> np.ndarray:
    """Fragment RGB with outside-mask pixels replaced by the nearest inside
    color, so bilinear rotation does not bleed background into the boundary."""
    rgb = frag.image[:, :, :3].astype(np.float32)
    _, idx = ndimage.distance_transform_edt(~frag.mask, return_indices=True)
    return rgb[idx[0], idx[1]]


def _jsd_similarity(hist_a: np.ndarray, hist_b: np.ndarray) -> float:
    """1 - JSD/log2, with all-zero histograms treated as uniform."""
    def norm(h):
        s = h.sum()
        return h / s if s > 0 else np.full_like(h, 1.0 / len(h))
    p, q = norm(hist_a.astype(np.float64)), norm(hist_b.astype(np.float64))
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(p > 0, p * np.log(p / m), 0.0).sum()
        kl_q = np.where(q > 0, q * np.log(q / m), 0.0).sum()
    jsd = 0.5 * (kl_p + kl_q)
    return 1.0 - jsd / _LOG2


class CompatEngine:
    """Scores relative placements of fragment pairs, with caching.

    One engine serves one puzzle (one rotation set and cell pitch); it keeps
    per-(fragment, rotation) tables plus a memo of scored relative
    configurations, so store builds and neighbor scans stay cheap.
    """

    def __init__(self, fragments: Sequence[Fragment], rotations: Sequence[float],
                 cell_size_px: int, cfg: CompatConfig):
        self.fragments = {f.id: f for f in fragments}
        self.rotations = tuple(rotations)
        self.cell_size_px = int(cell_size_px)
        self.cfg = cfg
        self._pad = cfg.contact_width_px + 2
        self._tables: dict[tuple[int, int], _FragTables] = {}
        self._filled: dict[int, np.ndarray] = {}
        self._rel_cache: dict[tuple, float] = {}
        self._surviving: dict[tuple, dict] = {}

    def tables(self, fid: int, theta: int) -> _FragTables:
        key = (fid, theta)
        if key not in self._tables:
            frag = self.fragments[fid]
            if fid not in self._filled:
                self._filled[fid] = _filled_rgb(frag)
            self._tables[key] = _FragTables(frag, self.rotations[theta], self._pad,
                                            self._filled[fid])
        return self._tables[key]

    # -- relative-configuration scoring ------------------------------------

    def rel_score(self, id_i: int, theta_i: int, id_j: int, theta_j: int,
                  dx: int, dy: int) -> float:
        """Score with j's anchor offset by (dx, dy) cells from i's anchor.

        Caller must pass id_i <= id_j (canonical orientation); pair_score
        handles the flip so symmetry is exact by construction.
        """
        key = (id_i, theta_i, id_j, theta_j, dx, dy)
        cached = self._rel_cache.get(key)
        if cached is not None:
            return cached
        score = self._rel_score_uncached(id_i, theta_i, id_j, theta_j, dx, dy)
        self._rel_cache[key] = score
        return score

    def _rel_score_uncached(self, id_i, theta_i, id_j, theta_j, dx, dy) -> float:
        cfg = self.cfg
        cs = self.cell_size_px
        ti = self.tables(id_i, theta_i)
        # cheap veto: anchors too far apart for any contact
        dist = cs * math.hypot(dx, dy)
        tj = self.tables(id_j, theta_j)
        if dist - ti.radius - tj.radius > cfg.contact_width_px + 0.5:
            return 0.0

        # window of canvas overlap; j's canvas lives at integer offset `shift`
        # in i-canvas coordinates
        sx = dx * cs + ti.anchor_x - tj.anchor_x
        sy = dy * cs + ti.anchor_y - tj.anchor_y
        ix0, ix1 = max(0, sx), min(ti.shape[1], sx + tj.shape[1])
        iy0, iy1 = max(0, sy), min(ti.shape[0], sy + tj.shape[0])
        if ix1 <= ix0 or iy1 <= iy0:
            return 0.0
        wi = (slice(iy0, iy1), slice(ix0, ix1))
        wj = (slice(iy0 - sy, iy1 - sy), slice(ix0 - sx, ix1 - sx))

        mi = ti.mask[wi]
        mj = tj.mask[wj]
        overlap = mi & mj
        n_overlap = int(overlap.sum())
        if n_overlap > cfg.overlap_epsilon * min(ti.area, tj.area):
            return 0.0

        edt_i = ti.edt[wi]
        contact_j = mj & ~mi & (edt_i <= cfg.contact_width_px)
        n_contact = int(contact_j.sum())
        if n_contact == 0:
            return 0.0

        # shape: mated boundary length over the smaller fragment's perimeter
        small = ti if (ti.area, id_i) < (tj.area, id_j) else tj
        s_shape = min(1.0, n_contact / small.perimeter)

        # color: Lab continuity between each contact pixel of j and its
        # nearest pixel of i
        jy, jx = np.nonzero(contact_j)
        lab_j = tj.lab[jy + wj[0].start, jx + wj[1].start]
        niy = ti.near_y[jy + iy0, jx + ix0]
        nix = ti.near_x[jy + iy0, jx + ix0]
        lab_i = ti.lab[niy, nix]
        d = np.sqrt(((lab_i - lab_j) ** 2).sum(axis=1))
        s_color = math.exp(-float(d.mean()) / cfg.sigma_color)

        # motif: orientation-histogram agreement over the two contact bands
        edt_j = tj.edt[wj]
        band_i = mi & ~mj & (edt_j <= cfg.contact_width_px)
        bins_i = ti.grad_bin[wi][band_i]
        mag_i = ti.grad_mag[wi][band_i]
        hist_i = np.bincount(bins_i, weights=mag_i, minlength=_N_ORI_BINS)
        bins_j = tj.grad_bin[wj][contact_j]
        mag_j = tj.grad_mag[wj][contact_j]
        hist_j = np.bincount(bins_j, weights=mag_j, minlength=_N_ORI_BINS)
        s_motif = _jsd_similarity(hist_i, hist_j)

        w_shape, w_color, w_motif = cfg.weights
        return float(np.clip(w_shape * s_shape + w_color * s_color + w_motif * s_motif,
                             0.0, 1.0))

    def surviving_configs(self, id_i: int, id_j: int, radius: int,
                          floor: float) -> dict[tuple[int, int, int, int], float]:
        """All relative configs (theta_i, theta_j, dx, dy) within `radius`
        cells whose score clears `floor`. Cached; id_i must be < id_j."""
        key = (id_i, id_j, radius, floor)
        if key not in self._surviving:
            n_rot = len(self.rotations)
            out = {}
            for ti in range(n_rot):
                for tj in range(n_rot):
                    for dx, dy in _disk_offsets(radius):
                        v = self.rel_score(id_i, ti, id_j, tj, dx, dy)
                        if v >= floor:
                            out[(ti, tj, dx, dy)] = v
            self._surviving[key] = out
        return self._surviving[key]

    # -- public pose-level scoring ------------------------------------------

    def pair_score(self, frag_i: Fragment, pose_i: Pose, frag_j: Fragment,
                   pose_j: Pose) -> float:
        if frag_i.id > frag_j.id:
            frag_i, frag_j = frag_j, frag_i
            pose_i, pose_j = pose_j, pose_i
        return self.rel_score(frag_i.id, pose_i.theta, frag_j.id, pose_j.theta,
                              pose_j.x - pose_i.x, pose_j.y - pose_i.y)

    def scores_vs_fixed(self, frag: Fragment, space: StrategySpace,
                        fixed_frag: Fragment, fixed_pose: Pose) -> np.ndarray:
        """Score every pose of `frag` against one fixed placement."""
        out = np.zeros(len(space))
        for idx, pose in enumerate(space.poses):
            out[idx] = self.pair_score(frag, pose, fixed_frag, fixed_pose)
        return out


def pair_score(frag_i: Fragment, pose_i: Pose, frag_j: Fragment, pose_j: Pose,
               board: Board, rotations: Sequence[float], cfg: CompatConfig,
               engine: Optional[CompatEngine] = None) -> float:
    """Compatibility of two placements; 0 on overlap veto or no contact.

    Scores are computed on the unbounded plane: the board only validates the
    cells, it does not clip material, so translation equivariance is exact.
    """
    for pose in (pose_i, pose_j):
        if not board.contains_cell(pose.x, pose.y):
            raise ValidationError(f"pose {pose} outside board")
        if not 0 <= pose.theta < len(rotations):
            raise ValidationError(f"theta index {pose.theta} out of range")
    if engine is None:
        engine = CompatEngine([frag_i] if frag_i.id == frag_j.id else [frag_i, frag_j],
                              rotations, board.cell_size_px, cfg)
    if engine.cell_size_px != board.cell_size_px or tuple(rotations) != engine.rotations:
        raise ValidationError("board/rotation configuration does not match engine")
    if frag_i.id == frag_j.id:
        # self-pairing only arises in degenerate tests; any overlap vetoes it
        eng = CompatEngine([frag_i], rotations, board.cell_size_px, cfg)
        return eng.rel_score(frag_i.id, pose_i.theta, frag_j.id, pose_j.theta,
                             pose_j.x - pose_i.x, pose_j.y - pose_i.y)
    return engine.pair_score(frag_i, pose_i, frag_j, pose_j)


# ---------------------------------------------------------------------------
# Sparse payoff store
# ---------------------------------------------------------------------------

class PayoffStore:
    """Sparse symmetric map (i, j, h, k) -> score; absent entries are 0.

    Entries are held once per unordered pair (i < j) as parallel arrays
    sorted by (h, k); the (j, i) view swaps the roles of h and k, so symmetry
    is exact by construction. No (i, i) entries exist.
    """

    def __init__(self, sizes: Mapping[int, int], score_floor: float = 1e-4):
        self.sizes = dict(sizes)
        self.score_floor = float(score_floor)
        self._pairs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._keys: dict[tuple[int, int], np.ndarray] = {}

    def put_pair(self, i: int, j: int, h: np.ndarray, k: np.ndarray, v: np.ndarray):
        if i == j:
            raise ValidationError("payoff store forbids self-pairs")
        if i > j:
            i, j, h, k = j, i, k, h
        if len(h) == 0:
            return
        order = np.lexsort((k, h))
        h = np.ascontiguousarray(h[order], dtype=np.int32)
        k = np.ascontiguousarray(k[order], dtype=np.int32)
        v = np.ascontiguousarray(v[order], dtype=np.float64)
        if v.min() < 0 or v.max() > 1:
            raise ValidationError("payoff values must lie in [0, 1]")
        for arr in (h, k, v):
            arr.flags.writeable = False
        self._pairs[(i, j)] = (h, k, v)

    @classmethod
    def from_entries(cls, entries, sizes: Mapping[int, int],
                     score_floor: float = 1e-4) -> "PayoffStore":
        """Build from an iterable of (i, j, h, k, v); symmetric closure implied.
        Values are clamped into [0, 1] like every other score source."""
        store = cls(sizes, score_floor)
        buckets: dict[tuple[int, int], list] = {}
        for i, j, h, k, v in entries:
            if i > j:
                i, j, h, k = j, i, k, h
            buckets.setdefault((i, j), []).append((h, k, min(max(float(v), 0.0), 1.0)))
        for (i, j), rows in buckets.items():
            dedup = {(h, k): v for h, k, v in rows}
            keep = [(h, k, v) for (h, k), v in dedup.items() if v >= score_floor]
            if keep:
                h, k, v = (np.array(col) for col in zip(*keep))
                store.put_pair(i, j, h, k, v)
        return store

    @property
    def players(self) -> list[int]:
        return sorted(self.sizes)

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._pairs)

    def pair_arrays(self, i: int, j: int):
        """(h, k, v) oriented so h indexes player i's poses; None if absent."""
        if (min(i, j), max(i, j)) not in self._pairs:
            return None
        h, k, v = self._pairs[(min(i, j), max(i, j))]
        return (h, k, v) if i < j else (k, h, v)

    def neighbors(self, player: int):
        """All (other, h, k, v) views for `player`, sorted by the other id."""
        if player not in self.sizes:
            raise FrescoError(f"unknown player {player}")
        out = []
        for (i, j) in self.pairs():
            if i == player:
                h, k, v = self._pairs[(i, j)]
                out.append((j, h, k, v))
            elif j == player:
                h, k, v = self._pairs[(i, j)]
                out.append((i, k, h, v))
        return out

    def value(self, i: int, j: int, h: int, k: int) -> float:
        if i == j:
            return 0.0
        arrays = self.pair_arrays(i, j)
        if arrays is None:
            return 0.0
        hs, ks, vs = arrays
        key = (min(i, j), max(i, j))
        if key not in self._keys:
            ch, ck, _ = self._pairs[key]
            self._keys[key] = ch.astype(np.int64) * (max(self.sizes[key[1]], 1) + 1) + ck
        mult = max(self.sizes[key[1]], 1) + 1
        probe = (h * mult + k) if i < j else (k * mult + h)
        pos = int(np.searchsorted(self._keys[key], probe))
        if pos < len(self._keys[key]) and self._keys[key][pos] == probe:
            return float(self._pairs[key][2][pos])
        return 0.0

    def entry_count(self) -> int:
        return sum(len(v) for _, _, v in self._pairs.values())

    def density(self) -> float:
        """Stored entries over the full |S_i| x |S_j| pair matrix size."""
        ids = self.players
        full = sum(self.sizes[i] * self.sizes[j]
                   for a, i in enumerate(ids) for j in ids[a + 1:])
        return self.entry_count() / full if full else 0.0

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path):
        path = Path(path)
        if path.suffix == ".json":
            doc = {"score_floor": self.score_floor,
                   "sizes": {str(k): v for k, v in self.sizes.items()},
                   "pairs": [{"i": i, "j": j,
                              "h": self._pairs[(i, j)][0].tolist(),
                              "k": self._pairs[(i, j)][1].tolist(),
                              "v": self._pairs[(i, j)][2].tolist()}
                             for i, j in self.pairs()]}
            path.write_text(json.dumps(doc))
        else:
            arrays = {"floor": np.array([self.score_floor]),
                      "players": np.array(self.players, dtype=np.int64),
                      "sizes": np.array([self.sizes[p] for p in self.players],
                                        dtype=np.int64)}
            for i, j in self.pairs():
                h, k, v = self._pairs[(i, j)]
                arrays[f"h_{i}_{j}"], arrays[f"k_{i}_{j}"], arrays[f"v_{i}_{j}"] = h, k, v
            with open(path, "wb") as fh:
                np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "PayoffStore":
        path = Path(path)
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
            store = cls({int(k): v for k, v in doc["sizes"].items()}, doc["score_floor"])
            for p in doc["pairs"]:
                store.put_pair(p["i"], p["j"], np.array(p["h"]), np.array(p["k"]),
                               np.array(p["v"]))
            return store
        with np.load(path) as data:
            players = data["players"]
            sizes = {int(p): int(s) for p, s in zip(players, data["sizes"])}
            store = cls(sizes, float(data["floor"][0]))
            for name in data.files:
                if name.startswith("h_"):
                    _, i, j = name.split("_")
                    store.put_pair(int(i), int(j), data[name],
                                   data[f"k_{i}_{j}"], data[f"v_{i}_{j}"])
        return store


# ---------------------------------------------------------------------------
# Store construction
# ---------------------------------------------------------------------------

_CELL_KEY_STRIDE = 1 << 20  # cell key = y * stride + x; larger than any board


def _disk_offsets(radius: int) -> list[tuple[int, int]]:
    return [(dx, dy)
            for dy in range(-radius, radius + 1)
            for dx in range(-radius, radius + 1)
            if dx * dx + dy * dy <= radius * radius]


def _celldense_keys(space: StrategySpace, n_rot: int) -> Optional[np.ndarray]:
    """Sorted cell keys when the space is (sorted cells) x (all rotations) in
    canonical order, else None. Such spaces admit the vectorized build path."""
    if len(space) % n_rot != 0:
        return None
    poses = space.poses
    keys = []
    for base in range(0, len(poses), n_rot):
        cell = (poses[base].x, poses[base].y)
        for t in range(n_rot):
            p = poses[base + t]
            if (p.x, p.y) != cell or p.theta != t:
                return None
        keys.append(cell[1] * _CELL_KEY_STRIDE + cell[0])
    arr = np.array(keys, dtype=np.int64)
    if np.any(np.diff(arr) <= 0):
        return None
    return arr


def build_payoff_store(puzzle: PuzzleDataset, spaces: Sequence[StrategySpace],
                       cfg: CompatConfig,
                       engine: Optional[CompatEngine] = None) -> PayoffStore:
    """Evaluate all pose pairs within the interaction radius; keep scores at
    or above the floor; symmetric closure by construction.

    `spaces` may cover a subset of the puzzle's fragments (restricted session
    rounds do this); players must be distinct and belong to the puzzle.
    """
    space_by_id = {s.player: s for s in spaces}
    if len(space_by_id) != len(spaces):
        raise ValidationError("duplicate players in strategy spaces")
    unknown = set(space_by_id) - set(puzzle.fragment_ids)
    if unknown:
        raise ValidationError(f"strategy spaces name unknown fragments {sorted(unknown)}")
    if engine is None:
        engine = CompatEngine(puzzle.fragments, puzzle.rotations,
                              puzzle.board.cell_size_px, cfg)
    radius = cfg.resolve_radius(puzzle.fragments, puzzle.board.cell_size_px)
    store = PayoffStore({p: len(s) for p, s in space_by_id.items()}, cfg.score_floor)
    ids = sorted(space_by_id)
    n_rot = len(puzzle.rotations)
    dense_keys = {p: _celldense_keys(s, n_rot) for p, s in space_by_id.items()}

    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            if dense_keys[i] is not None and dense_keys[j] is not None:
                h, k, v = _celldense_pair(engine, i, j, dense_keys[i], dense_keys[j],
                                          n_rot, radius, cfg)
            else:
                h, k, v = _generic_pair(engine, i, j, space_by_id[i], space_by_id[j],
                                        radius, cfg)
            store.put_pair(i, j, h, k, v)
    return store


def _celldense_pair(engine, i, j, keys_i, keys_j, n_rot, radius, cfg):
    """Each surviving relative config is replicated over every cell pair both
    spaces admit, found by intersecting shifted cell-key arrays."""
    hs, ks, vs = [], [], []
    configs = engine.surviving_configs(i, j, radius, cfg.score_floor)
    for (ti, tj, dx, dy), v in configs.items():
        shifted = keys_j - (dy * _CELL_KEY_STRIDE + dx)
        _, ia, ib = np.intersect1d(keys_i, shifted, assume_unique=True,
                                   return_indices=True)
        if ia.size == 0:
            continue
        hs.append(ia.astype(np.int64) * n_rot + ti)
        ks.append(ib.astype(np.int64) * n_rot + tj)
        vs.append(np.full(ia.size, v))
    if not hs:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.array([])
    return np.concatenate(hs), np.concatenate(ks), np.concatenate(vs)


def _generic_pair(engine, i, j, si, sj, radius, cfg):
    """Direct sweep for irregular spaces; iterates the smaller space outward."""
    if len(sj) < len(si):
        k, h, v = _generic_pair(engine, j, i, sj, si, radius, cfg)
        return h, k, v
    by_cell: dict[tuple[int, int], list[int]] = {}
    for idx, p in enumerate(sj.poses):
        by_cell.setdefault((p.x, p.y), []).append(idx)
    offsets = _disk_offsets(radius)
    hs, ks, vs = [], [], []
    for hi, pi in enumerate(si.poses):
        for dx, dy in offsets:
            for kj in by_cell.get((pi.x + dx, pi.y + dy), ()):
                pj = sj.poses[kj]
                if i < j:
                    v = engine.rel_score(i, pi.theta, j, pj.theta, dx, dy)
                else:
                    v = engine.rel_score(j, pj.theta, i, pi.theta, -dx, -dy)
                if v >= cfg.score_floor:
                    hs.append(hi)
                    ks.append(kj)
                    vs.append(v)
    return np.array(hs, dtype=np.int64), np.array(ks, dtype=np.int64), np.array(vs)


# ---------------------------------------------------------------------------
# Expected payoff against current beliefs, off the sparse store
# ---------------------------------------------------------------------------

def _distributions(beliefs) -> Mapping[int, np.ndarray]:
    return beliefs.distributions if hasattr(beliefs, "distributions") else beliefs


def expected_payoff_vector(store: PayoffStore, beliefs, player: int) -> np.ndarray:
    """Expected payoff of every strategy of `player` under the given beliefs.

    Exactly equals the dense sum because absent entries are zero. Summation
    order is fixed (sorted neighbor ids, then sorted (h, k)) for determinism.
    """
    dists = _distributions(beliefs)
    if player not in store.sizes:
        raise FrescoError(f"unknown player {player}")
    # sized from the beliefs: strategy spaces may have grown past the store
    # (appended correction poses), and absent entries are 0 anyway
    pi = np.zeros(len(dists[player]))
    for other, h, k, v in store.neighbors(player):
        x_other = dists[other]
        pi += np.bincount(h, weights=v * x_other[k], minlength=len(pi))
    return pi


def expected_payoff(store: PayoffStore, beliefs, player: int, strategy: int) -> float:
    return float(expected_payoff_vector(store, beliefs, player)[strategy])
