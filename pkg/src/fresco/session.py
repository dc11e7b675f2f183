"""Interactive assembly sessions: lock-set bookkeeping, candidate rounds,
global refinement with pause points, a scripted stand-in user, and replay.

Two modes share the same verification rule:

  IA (iterative anchoring): each round ranks unlocked fragments by their best
  stored compatibility with the locked set, optimizes only those candidates
  over a pose grid restricted to the neighborhood of the locked assembly,
  then pauses for lock / correct / reject verdicts.

  CIR (continuous interactive refinement): the solver runs globally over all
  unlocked fragments; the user pauses it, hands in verdicts, and resumes.

On every verification the lock set grows monotonically; newly verified
players become frozen one-hot beliefs at their verified pose, previously
locked players keep their belief bitwise, and every remaining unlocked player
is reset to uniform (disable via SessionConfig.uniform_reset, documented as a
deviation from that reset-everything rule).

The session's global frame is fixed by the seed: it is locked at the board's
center cell with rotation step 0, and ground truth is mapped into this frame
by the rigid transform taking the seed's ground-truth pose to that origin.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .compat import CompatConfig, CompatEngine, PayoffStore, build_payoff_store
from .errors import FrescoError, SessionError, ValidationError
from .model import (Board, Pose, PuzzleDataset, StrategySpace,
                    build_strategy_space, _pose_transform)
from .seeding import SeedConfig, rank_seeds
from .solver import (BeliefState, ConvergenceReport, SolverConfig, argmax_assembly,
                     init_beliefs, one_hot, run_until_converged)

MODE_IA = "ia"
MODE_CIR = "cir"

STATUS_RUNNING = "running"
STATUS_PAUSED = "paused"
STATUS_CONVERGED = "converged"
STATUS_COMPLETE = "complete"

ACTION_LOCK = "lock"
ACTION_MOVE_AND_LOCK = "move_and_lock"
ACTION_REJECT = "reject"


@dataclass(frozen=True)
class OracleConfig:
    """Scripted-user tolerances: a proposal within these bounds of mapped
    ground truth gets locked as-is; otherwise it may be corrected."""

    pos_tol_cells: int = 0
    rot_tol_steps: int = 0
    corrections_per_round: int = 1

    def __post_init__(self):
        if min(self.pos_tol_cells, self.rot_tol_steps, self.corrections_per_round) < 0:
            raise ValidationError("oracle tolerances must be nonnegative")


@dataclass(frozen=True)
class SessionConfig:
    compat: CompatConfig = field(default_factory=CompatConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed_ranking: SeedConfig = field(default_factory=SeedConfig)
    top_k_neighbors: int = 4
    uniform_reset: bool = True

    def __post_init__(self):
        if self.top_k_neighbors <= 0:
            raise ValidationError("top_k_neighbors must be positive")


@dataclass(frozen=True)
class SessionEvent:
    round: int
    kind: str  # seed_selected | lock | move_and_lock | reject_candidate |
    #            pause | resume | solver_converged
    player: Optional[int] = None
    pose: Optional[Pose] = None
    iteration: Optional[int] = None  # solver step counter at log time
    wall_time_ms: int = 0

    def to_json(self) -> dict:
        return {"round": self.round, "kind": self.kind, "player": self.player,
                "pose": None if self.pose is None else list(self.pose.as_tuple()),
                "iteration": self.iteration, "wall_time_ms": self.wall_time_ms}

    @classmethod
    def from_json(cls, doc: dict) -> "SessionEvent":
        pose = doc.get("pose")
        return cls(doc["round"], doc["kind"], doc.get("player"),
                   None if pose is None else Pose(*pose),
                   doc.get("iteration"), doc.get("wall_time_ms", 0))


@dataclass(frozen=True)
class Verdict:
    player: int
    action: str
    pose: Optional[Pose] = None  # required for move_and_lock

    def to_json(self) -> dict:
        return {"player": self.player, "action": self.action,
                "pose": None if self.pose is None else list(self.pose.as_tuple())}

    @classmethod
    def from_json(cls, doc: dict) -> "Verdict":
        pose = doc.get("pose")
        return cls(int(doc["player"]), doc["action"],
                   None if pose is None else Pose(*pose))


class SessionState:
    """Single-writer session: one loop mutates it, everyone else reads."""

    def __init__(self, puzzle: PuzzleDataset, mode: str, config: SessionConfig):
        self.puzzle = puzzle
        self.mode = mode
        self.config = config
        self.spaces: dict[int, StrategySpace] = {
            f.id: build_strategy_space(f, puzzle.board, puzzle.rotations)
            for f in puzzle.fragments}
        self.origin = Pose(puzzle.board.cols // 2, puzzle.board.rows // 2, 0)
        self.seed_id: Optional[int] = None
        self.beliefs: Optional[BeliefState] = None
        self.locked: dict[int, Pose] = {}
        self.candidates: list[tuple[int, float]] = []
        self.proposals: dict[int, Pose] = {}
        self.round_beliefs: Optional[BeliefState] = None
        self.round_spaces: dict[int, StrategySpace] = {}
        self.round = 0
        self.event_log: list[SessionEvent] = []
        self.last_event: dict[int, str] = {}
        self.status = STATUS_RUNNING
        self._engine: Optional[CompatEngine] = None
        self._store: Optional[PayoffStore] = None
        self._t0 = time.perf_counter()

    # -- lazy heavy artifacts -------------------------------------------------

    @property
    def engine(self) -> CompatEngine:
        if self._engine is None:
            self._engine = CompatEngine(self.puzzle.fragments, self.puzzle.rotations,
                                        self.puzzle.board.cell_size_px,
                                        self.config.compat)
        return self._engine

    @property
    def store(self) -> PayoffStore:
        """Payoff store over the full pose grids; built once, on first use."""
        if self._store is None:
            self._store = build_payoff_store(self.puzzle, list(self.spaces.values()),
                                             self.config.compat, engine=self.engine)
        return self._store

    def use_store(self, store: PayoffStore):
        """Adopt a prebuilt/cached store instead of building one."""
        self._store = store

    def use_engine(self, engine: CompatEngine):
        """Adopt a prebuilt compatibility engine, e.g. shared across sessions
        on the same puzzle."""
        self._engine = engine

    # -- bookkeeping ----------------------------------------------------------

    def log(self, kind: str, player: Optional[int] = None, pose: Optional[Pose] = None):
        iteration = None if self.beliefs is None else self.beliefs.iteration
        self.event_log.append(SessionEvent(
            self.round, kind, player, pose, iteration,
            int((time.perf_counter() - self._t0) * 1000)))
        if player is not None:
            self.last_event[player] = kind

    @property
    def fragment_ids(self) -> list[int]:
        return self.puzzle.fragment_ids

    def unlocked(self) -> list[int]:
        return [fid for fid in self.fragment_ids if fid not in self.locked]

    def locked_indices(self) -> dict[int, int]:
        return {p: self.spaces[p].index_of(pose) for p, pose in self.locked.items()}

    def candidate_ids(self) -> list[int]:
        return [fid for fid, _ in self.candidates]


def start_session(puzzle: PuzzleDataset, mode: str, seed_choice: int,
                  config: Optional[SessionConfig] = None) -> SessionState:
    """Lock the chosen seed at the session origin and set every other player
    uniform; the session is then ready for rounds (IA) or refinement (CIR)."""
    config = config or SessionConfig()
    mode = mode.lower()
    if mode not in (MODE_IA, MODE_CIR):
        raise ValidationError(f"unknown mode {mode!r}")
    state = SessionState(puzzle, mode, config)
    if seed_choice not in state.spaces:
        raise ValidationError(f"unknown fragment id {seed_choice}")
    state.seed_id = seed_choice
    state.locked[seed_choice] = state.origin
    state.beliefs = init_beliefs(list(state.spaces.values()),
                                 {seed_choice: state.origin})
    state.log("seed_selected", seed_choice, state.origin)
    return state


# ---------------------------------------------------------------------------
# Candidate ranking (IA)
# ---------------------------------------------------------------------------

def neighbor_suitability(store: PayoffStore, locked: Mapping[int, int],
                         player: int) -> float:
    """Best stored score of any pose of `player` against any locked fragment
    pinned at its locked pose index; 0 when nothing is stored.

    `locked` maps player id to its pose index in the space the store was
    built over.
    """
    if player in locked:
        raise ValidationError(f"player {player} is locked")
    best = 0.0
    for other, idx in locked.items():
        arrays = store.pair_arrays(player, other)
        if arrays is None:
            continue
        _, k, v = arrays
        hit = v[k == idx]
        if hit.size:
            best = max(best, float(hit.max()))
    return best


def propose_candidates(state: SessionState, k: Optional[int] = None) -> list[int]:
    """Top-k unlocked fragments by neighbor suitability, ties by id.

    Fragments rejected in the immediately preceding round are skipped and the
    next-ranked ones backfill; a rejection lasts one round only.
    """
    if state.mode != MODE_IA:
        raise SessionError("candidate proposals exist only in IA mode")
    unlocked = state.unlocked()
    if not unlocked:
        raise SessionError("session complete")
    k = k or state.config.top_k_neighbors
    store = state.store
    locked_idx = state.locked_indices()
    scores = {f: neighbor_suitability(store, locked_idx, f) for f in unlocked}
    ranked = sorted(unlocked, key=lambda f: (-scores[f], f))
    recently_rejected = {e.player for e in state.event_log
                         if e.kind == "reject_candidate" and e.round == state.round - 1}
    eligible = [f for f in ranked if f not in recently_rejected] or ranked
    chosen = eligible[:k]
    state.candidates = [(f, scores[f]) for f in chosen]
    return chosen


def _locked_region_cells(state: SessionState, radius: int) -> list[tuple[int, int]]:
    """Cells whose center lies within radius cells of any locked placed
    mask's bounding box; the admissible region for candidate poses."""
    board = state.puzzle.board
    cs = board.cell_size_px
    rects = []
    for player, pose in state.locked.items():
        frag = state.puzzle.fragment(player)
        m = _pose_transform(frag, pose, board, state.puzzle.rotations)
        x0, y0, x1, y1 = frag.bbox
        corners = np.array([[x0, y0, 1], [x1 + 1, y0, 1], [x0, y1 + 1, 1],
                            [x1 + 1, y1 + 1, 1]], dtype=np.float64) @ m.T
        rects.append((corners[:, 0].min(), corners[:, 1].min(),
                      corners[:, 0].max(), corners[:, 1].max()))
    cx = (np.arange(board.cols) + 0.5) * cs
    cy = (np.arange(board.rows) + 0.5) * cs
    px = np.broadcast_to(cx, (board.rows, board.cols))
    py = np.broadcast_to(cy[:, None], (board.rows, board.cols))
    within = np.zeros((board.rows, board.cols), dtype=bool)
    limit = radius * cs
    for rx0, ry0, rx1, ry1 in rects:
        dx = np.maximum(np.maximum(rx0 - px, px - rx1), 0.0)
        dy = np.maximum(np.maximum(ry0 - py, py - ry1), 0.0)
        within |= np.hypot(dx, dy) <= limit
    ys, xs = np.nonzero(within)
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


def run_ia_round(state: SessionState,
                 observer: Optional[Callable[[BeliefState], Optional[bool]]] = None
                 ) -> SessionState:
    """Optimize the current candidates against the frozen locked field on a
    restricted pose grid; stash argmax proposals and pause for verification."""
    if state.mode != MODE_IA:
        raise SessionError("not an IA session")
    if not state.candidates:
        raise SessionError("no candidates proposed for this round")
    radius = state.config.compat.resolve_radius(state.puzzle.fragments,
                                                state.puzzle.board.cell_size_px)
    cells = _locked_region_cells(state, radius)
    round_spaces = [build_strategy_space(state.puzzle.fragment(fid), state.puzzle.board,
                                         state.puzzle.rotations, restriction=cells)
                    for fid in state.candidate_ids()]
    round_spaces += [StrategySpace(p, (pose,), state.puzzle.board.cell_size_px)
                     for p, pose in state.locked.items()]
    by_id = {s.player: s for s in round_spaces}
    state.round_spaces = by_id  # observers need these to decode interim argmaxes
    beliefs = init_beliefs(round_spaces, anchors=dict(state.locked))
    store = build_payoff_store(state.puzzle, round_spaces, state.config.compat,
                               engine=state.engine)
    final, report = run_until_converged(beliefs, store, state.config.solver, observer)
    state.round_beliefs = final
    state.proposals = {fid: by_id[fid].poses[final.argmax(fid)]
                       for fid in state.candidate_ids()}
    if report.converged:
        state.log("solver_converged")
    state.status = STATUS_PAUSED
    return state


# ---------------------------------------------------------------------------
# Verification (the lock-set recurrence)
# ---------------------------------------------------------------------------

def apply_verification(state: SessionState, verdicts: Sequence[Verdict]) -> SessionState:
    """Grow the lock set by the verified players and rewrite beliefs: new
    locks one-hot frozen, old locks untouched, all other unlocked players
    reset to uniform. Empty verdicts still trigger the reset and advance the
    round."""
    if state.status == STATUS_COMPLETE:
        raise SessionError("session complete")
    seen: set[int] = set()
    resolved: list[tuple[int, str, Optional[Pose]]] = []
    candidate_ids = set(state.candidate_ids())
    for v in verdicts:
        if v.player not in state.spaces:
            raise ValidationError(f"unknown player {v.player}")
        if v.player in state.locked:
            raise SessionError(f"player {v.player} already locked")
        if v.player in seen:
            raise ValidationError(f"duplicate verdict for player {v.player}")
        seen.add(v.player)
        if state.mode == MODE_IA and v.player not in candidate_ids:
            raise ValidationError(f"player {v.player} is not a current candidate")
        if v.action == ACTION_REJECT:
            resolved.append((v.player, ACTION_REJECT, None))
        elif v.action == ACTION_LOCK:
            pose = v.pose
            if pose is None:
                pose = state.proposals.get(v.player)
            if pose is None:  # CIR: lock whatever the solver currently favors
                pose = state.spaces[v.player].poses[state.beliefs.argmax(v.player)]
            resolved.append((v.player, ACTION_LOCK, pose))
        elif v.action == ACTION_MOVE_AND_LOCK:
            if v.pose is None:
                raise ValidationError("move_and_lock requires a pose")
            resolved.append((v.player, ACTION_MOVE_AND_LOCK, v.pose))
        else:
            raise ValidationError(f"unknown verdict action {v.action!r}")
    return _apply_resolved(state, resolved)


def _apply_resolved(state: SessionState,
                    resolved: Sequence[tuple[int, str, Optional[Pose]]]) -> SessionState:
    board = state.puzzle.board
    n_rot = len(state.puzzle.rotations)
    new_locks: dict[int, Pose] = {}
    for player, kind, pose in resolved:
        if kind == ACTION_REJECT:
            state.log("reject_candidate", player)
            continue
        if not board.contains_cell(pose.x, pose.y) or not 0 <= pose.theta < n_rot:
            raise ValidationError(f"pose {pose} for player {player} is off-board")
        if pose not in state.spaces[player]:
            # manual corrections may leave the prebuilt grid; append the pose
            state.spaces[player] = state.spaces[player].with_extra_pose(pose)
        new_locks[player] = pose
        state.log(kind, player, pose)
    state.locked.update(new_locks)

    dists: dict[int, np.ndarray] = {}
    for fid in state.fragment_ids:
        space = state.spaces[fid]
        if fid in new_locks:
            dists[fid] = one_hot(len(space), space.index_of(new_locks[fid]))
        elif fid in state.locked:
            dists[fid] = state.beliefs.distributions[fid]
        elif state.config.uniform_reset:
            dists[fid] = np.full(len(space), 1.0 / len(space))
        else:
            dists[fid] = state.beliefs.distributions[fid]
    state.beliefs = BeliefState(dists, frozen=set(state.locked),
                                iteration=state.beliefs.iteration)
    state.round += 1
    state.candidates = []
    state.proposals = {}
    state.status = (STATUS_COMPLETE if len(state.locked) == len(state.fragment_ids)
                    else STATUS_RUNNING)
    return state


# ---------------------------------------------------------------------------
# Global refinement (CIR)
# ---------------------------------------------------------------------------

def run_cir(state: SessionState, pause_at_iteration: Optional[int] = None,
            observer: Optional[Callable[[BeliefState], Optional[bool]]] = None
            ) -> SessionState:
    """Run the global solver until convergence or the requested pause point.

    Resumable: call again after apply_verification to continue from the
    rewritten beliefs.
    """
    if state.mode != MODE_CIR:
        raise SessionError("not a CIR session")
    if state.status == STATUS_COMPLETE:
        raise SessionError("session complete")
    store = state.store
    if state.status == STATUS_PAUSED:
        state.log("resume")
    state.status = STATUS_RUNNING

    def watch(beliefs: BeliefState) -> bool:
        external = bool(observer(beliefs)) if observer is not None else False
        timed = pause_at_iteration is not None and beliefs.iteration >= pause_at_iteration
        return external or timed

    final, report = run_until_converged(state.beliefs, store, state.config.solver, watch)
    state.beliefs = final
    if report.converged:
        state.status = STATUS_CONVERGED
        state.log("solver_converged")
    else:
        state.status = STATUS_PAUSED
        state.log("pause")
    return state


def session_assembly(state: SessionState) -> dict[int, Pose]:
    """Final poses: locked poses once complete, else current argmax per player."""
    if state.status == STATUS_COMPLETE:
        return dict(sorted(state.locked.items()))
    return argmax_assembly(state.beliefs, list(state.spaces.values()))


def assembly_to_json(assembly: Mapping[int, Pose]) -> str:
    """Canonical serialization used for persistence and exact comparisons."""
    return json.dumps({str(fid): list(pose.as_tuple())
                       for fid, pose in sorted(assembly.items())},
                      sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Scripted user
# ---------------------------------------------------------------------------

def mapped_ground_truth(state: SessionState,
                        gt: Optional[Mapping[int, Pose]] = None) -> dict[int, Pose]:
    """Ground truth carried into the session frame by the rigid transform
    that takes the seed's ground-truth pose to the session origin.

    Cell offsets are rotated and rounded; this is exact for right-angle
    rotation steps (any seed rotation is a multiple of 90 degrees there).
    """
    gt = gt or state.puzzle.ground_truth
    if not gt:
        raise ValidationError("puzzle has no ground truth")
    seed_gt = gt[state.seed_id]
    n_rot = len(state.puzzle.rotations)
    angle = math.radians(state.puzzle.rotations[seed_gt.theta])
    c, s = math.cos(angle), math.sin(angle)
    mapped = {}
    for fid, pose in gt.items():
        dx, dy = pose.x - seed_gt.x, pose.y - seed_gt.y
        rx = round(c * dx - s * dy)  # inverse of the rasterizer's rotation
        ry = round(s * dx + c * dy)
        mapped[fid] = Pose(state.origin.x + rx, state.origin.y + ry,
                           (pose.theta - seed_gt.theta) % n_rot)
    return mapped


def _rot_steps_apart(a: int, b: int, n_rot: int) -> int:
    d = abs(a - b) % n_rot
    return min(d, n_rot - d)


def oracle_user(state: SessionState, cfg: Optional[OracleConfig] = None,
                gt: Optional[Mapping[int, Pose]] = None) -> list[Verdict]:
    """Verdicts a ground-truth-perfect user would hand in right now.

    IA inspects the round's proposals; CIR inspects every unlocked player's
    argmax. Correct placements lock; up to corrections_per_round wrong ones
    (highest neighbor suitability first) are moved to ground truth; leftover
    wrong IA candidates are rejected.
    """
    cfg = cfg or OracleConfig()
    mapped = mapped_ground_truth(state, gt)
    board = state.puzzle.board
    n_rot = len(state.puzzle.rotations)

    if state.mode == MODE_IA:
        if not state.proposals:
            raise SessionError("no proposals to verify")
        inspect = [(fid, state.proposals[fid]) for fid in state.candidate_ids()]
        suitability = dict(state.candidates)
    else:
        locked_idx = state.locked_indices()
        inspect = [(fid, state.spaces[fid].poses[state.beliefs.argmax(fid)])
                   for fid in state.unlocked()]
        suitability = {fid: neighbor_suitability(state.store, locked_idx, fid)
                       for fid in state.unlocked()}

    verdicts: list[Verdict] = []
    wrong: list[int] = []
    for fid, pose in inspect:
        target = mapped[fid]
        pos_ok = max(abs(pose.x - target.x), abs(pose.y - target.y)) <= cfg.pos_tol_cells
        rot_ok = _rot_steps_apart(pose.theta, target.theta, n_rot) <= cfg.rot_tol_steps
        if pos_ok and rot_ok:
            verdicts.append(Verdict(fid, ACTION_LOCK))
        else:
            wrong.append(fid)

    wrong.sort(key=lambda f: (-suitability.get(f, 0.0), f))
    corrected = 0
    for fid in wrong:
        target = mapped[fid]
        if corrected < cfg.corrections_per_round and board.contains_cell(target.x, target.y):
            verdicts.append(Verdict(fid, ACTION_MOVE_AND_LOCK, target))
            corrected += 1
        elif state.mode == MODE_IA:
            verdicts.append(Verdict(fid, ACTION_REJECT))
    return verdicts


# ---------------------------------------------------------------------------
# End-to-end runners
# ---------------------------------------------------------------------------

def pick_seed(puzzle: PuzzleDataset, config: SessionConfig) -> int:
    return rank_seeds(puzzle, config.seed_ranking).entries[0].fragment_id


def run_oracle_ia(puzzle: PuzzleDataset, config: Optional[SessionConfig] = None,
                  oracle: Optional[OracleConfig] = None,
                  seed_choice: Optional[int] = None,
                  store: Optional[PayoffStore] = None,
                  observer: Optional[Callable[[BeliefState], Optional[bool]]] = None
                  ) -> SessionState:
    """Complete an IA session with the scripted user; with a correction
    budget of at least 1 this locks at least one fragment per round."""
    config = config or SessionConfig()
    oracle = oracle or OracleConfig()
    seed = pick_seed(puzzle, config) if seed_choice is None else seed_choice
    state = start_session(puzzle, MODE_IA, seed, config)
    if store is not None:
        state.use_store(store)
    for _ in range(len(puzzle.fragments) + 2):
        if state.status == STATUS_COMPLETE:
            break
        propose_candidates(state)
        run_ia_round(state, observer=observer)
        apply_verification(state, oracle_user(state, oracle))
    return state


def run_oracle_cir(puzzle: PuzzleDataset, config: Optional[SessionConfig] = None,
                   oracle: Optional[OracleConfig] = None,
                   seed_choice: Optional[int] = None,
                   pause_every: int = 50,
                   store: Optional[PayoffStore] = None) -> SessionState:
    """Complete a CIR session with the scripted user pausing periodically."""
    config = config or SessionConfig()
    oracle = oracle or OracleConfig()
    seed = pick_seed(puzzle, config) if seed_choice is None else seed_choice
    state = start_session(puzzle, MODE_CIR, seed, config)
    if store is not None:
        state.use_store(store)
    for _ in range(2 * len(puzzle.fragments) + 4):
        if state.status == STATUS_COMPLETE:
            break
        run_cir(state, pause_at_iteration=state.beliefs.iteration + pause_every)
        if state.status == STATUS_COMPLETE:
            break
        apply_verification(state, oracle_user(state, oracle))
    return state


def run_auto(puzzle: PuzzleDataset, config: Optional[SessionConfig] = None,
             seed_choice: Optional[int] = None,
             store: Optional[PayoffStore] = None
             ) -> tuple[dict[int, Pose], ConvergenceReport]:
    """Non-interactive baseline: anchor the top-ranked seed at the session
    origin, run the global dynamics to convergence, decode the argmax."""
    config = config or SessionConfig()
    seed = pick_seed(puzzle, config) if seed_choice is None else seed_choice
    spaces = [build_strategy_space(f, puzzle.board, puzzle.rotations)
              for f in puzzle.fragments]
    origin = Pose(puzzle.board.cols // 2, puzzle.board.rows // 2, 0)
    beliefs = init_beliefs(spaces, {seed: origin})
    if store is None:
        store = build_payoff_store(puzzle, spaces, config.compat)
    final, report = run_until_converged(beliefs, store, config.solver)
    return argmax_assembly(final, spaces), report


# ---------------------------------------------------------------------------
# Persistence and replay
# ---------------------------------------------------------------------------

def _config_to_json(config: SessionConfig) -> dict:
    c, s, r = config.compat, config.solver, config.seed_ranking
    return {
        "compat": {"contact_width_px": c.contact_width_px,
                   "overlap_epsilon": c.overlap_epsilon, "sigma_color": c.sigma_color,
                   "weights": list(c.weights),
                   "interaction_radius_cells": c.interaction_radius_cells,
                   "score_floor": c.score_floor},
        "solver": {"max_iters": s.max_iters, "convergence_tol": s.convergence_tol,
                   "stall_guard": s.stall_guard},
        "seed_ranking": {"alpha": r.alpha, "band_width_px": r.band_width_px,
                         "rho_res_px": r.rho_res_px, "theta_res_deg": r.theta_res_deg,
                         "vote_threshold": r.vote_threshold,
                         "min_line_len_px": r.min_line_len_px,
                         "hist_bins": list(r.hist_bins), "top_k": r.top_k},
        "top_k_neighbors": config.top_k_neighbors,
        "uniform_reset": config.uniform_reset,
    }


def _config_from_json(doc: dict) -> SessionConfig:
    c, s, r = doc["compat"], doc["solver"], doc["seed_ranking"]
    return SessionConfig(
        compat=CompatConfig(contact_width_px=c["contact_width_px"],
                            overlap_epsilon=c["overlap_epsilon"],
                            sigma_color=c["sigma_color"],
                            weights=tuple(c["weights"]),
                            interaction_radius_cells=c["interaction_radius_cells"],
                            score_floor=c["score_floor"]),
        solver=SolverConfig(max_iters=s["max_iters"],
                            convergence_tol=s["convergence_tol"],
                            stall_guard=s["stall_guard"]),
        seed_ranking=SeedConfig(alpha=r["alpha"], band_width_px=r["band_width_px"],
                                rho_res_px=r["rho_res_px"],
                                theta_res_deg=r["theta_res_deg"],
                                vote_threshold=r["vote_threshold"],
                                min_line_len_px=r["min_line_len_px"],
                                hist_bins=tuple(r["hist_bins"]), top_k=r["top_k"]),
        top_k_neighbors=doc["top_k_neighbors"],
        uniform_reset=doc["uniform_reset"],
    )


def session_doc(state: SessionState, puzzle_path: Optional[str] = None) -> dict:
    return {"v": 1, "puzzle": puzzle_path, "mode": state.mode,
            "seed": state.seed_id, "status": state.status, "round": state.round,
            "config": _config_to_json(state.config),
            "events": [e.to_json() for e in state.event_log],
            "assembly": json.loads(assembly_to_json(session_assembly(state)))}


def save_session(state: SessionState, path: str | Path,
                 puzzle_path: Optional[str] = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(session_doc(state, puzzle_path), indent=1))
    return path


def replay(puzzle: PuzzleDataset, session_doc: dict | str | Path) -> dict[int, Pose]:
    """Re-execute a session log headlessly and return the final assembly.

    Verified poses are recorded in the log, so verification rounds replay
    without re-running round solvers; only a trailing global-refinement
    segment (a CIR session that ended converged or paused) is re-run, which
    is deterministic given the same puzzle and configs.
    """
    if not isinstance(session_doc, dict):
        session_doc = json.loads(Path(session_doc).read_text())
    config = _config_from_json(session_doc["config"])
    events = [SessionEvent.from_json(e) for e in session_doc["events"]]
    seed_events = [e for e in events if e.kind == "seed_selected"]
    if len(seed_events) != 1:
        raise SessionError("log must contain exactly one seed_selected event")
    state = start_session(puzzle, session_doc["mode"], seed_events[0].player, config)

    verification_kinds = {ACTION_LOCK, ACTION_MOVE_AND_LOCK, "reject_candidate"}
    rounds: dict[int, list[SessionEvent]] = {}
    last_verification_iter = 0
    for e in events:
        if e.kind in verification_kinds:
            rounds.setdefault(e.round, []).append(e)
            if e.iteration is not None:
                last_verification_iter = e.iteration
    for r in sorted(rounds):
        resolved = [(e.player,
                     ACTION_REJECT if e.kind == "reject_candidate" else e.kind,
                     e.pose) for e in rounds[r]]
        _apply_resolved(state, resolved)

    if state.status != STATUS_COMPLETE and session_doc["mode"] == MODE_CIR:
        if session_doc["status"] == STATUS_CONVERGED:
            run_cir(state)
        elif session_doc["status"] == STATUS_PAUSED:
            pauses = [e for e in events if e.kind == "pause" and e.iteration is not None]
            if pauses:
                steps = max(0, pauses[-1].iteration - last_verification_iter)
                run_cir(state, pause_at_iteration=state.beliefs.iteration + steps)
    return session_assembly(state)
