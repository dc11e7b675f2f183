"""Relaxation labeling over the payoff store via discrete replicator dynamics.

Each fragment is a player mixing over its pose space. One synchronous update
step is

    x_ih(t+1) = x_ih(t) * pi_ih(x(t)) / sum_k x_ik(t) * pi_ik(x(t))

for every non-frozen player. Frozen players keep their one-hot distribution
verbatim but still shape everyone else's expected payoffs. With the symmetric
nonnegative payoff store this update is a growth transform, so the average
local consistency sum_i sum_h x_ih * pi_ih never decreases; fixed points are
the Nash equilibria of the underlying polymatrix game.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .compat import PayoffStore, expected_payoff_vector
from .errors import FrescoError, ValidationError
from .model import Pose, StrategySpace

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 2000
    convergence_tol: float = 1e-6  # max per-player L1 change
    stall_guard: bool = True  # zero denominator: hold distribution in place

    def __post_init__(self):
        if self.convergence_tol <= 0 or self.max_iters <= 0:
            raise ValidationError("convergence_tol and max_iters must be positive")


class BeliefState:
    """Per-player simplex distributions, a frozen set, and a step counter.

    Frozen players must be exactly one-hot; their vectors are shared (not
    copied) across steps so immutability is bitwise.
    """

    def __init__(self, distributions: Mapping[int, np.ndarray],
                 frozen: Iterable[int] = (), iteration: int = 0):
        self.distributions: dict[int, np.ndarray] = {}
        self.frozen = frozenset(frozen)
        self.iteration = int(iteration)
        if self.iteration < 0:
            raise ValidationError("iteration must be nonnegative")
        for player in sorted(distributions):
            x = np.asarray(distributions[player], dtype=np.float64)
            if x.ndim != 1 or x.size == 0:
                raise ValidationError(f"player {player}: distribution must be a 1-D vector")
            if x.min() < 0 or abs(x.sum() - 1.0) > _SIMPLEX_TOL:
                raise ValidationError(f"player {player}: distribution must lie on the simplex")
            if player in self.frozen and not _is_one_hot(x):
                raise ValidationError(f"frozen player {player} must be one-hot")
            if x.flags.writeable:
                x = x.copy()
                x.flags.writeable = False
            self.distributions[player] = x
        if not self.frozen <= set(self.distributions):
            raise ValidationError("frozen set names unknown players")

    @classmethod
    def uniform(cls, sizes: Mapping[int, int]) -> "BeliefState":
        return cls({p: np.full(n, 1.0 / n) for p, n in sizes.items()})

    @property
    def players(self) -> list[int]:
        return list(self.distributions)

    def with_distribution(self, player: int, x: np.ndarray,
                          freeze: Optional[bool] = None) -> "BeliefState":
        if player not in self.distributions:
            raise ValidationError(f"unknown player {player}")
        dists = dict(self.distributions)
        dists[player] = np.asarray(x, dtype=np.float64)
        frozen = set(self.frozen)
        if freeze is True:
            frozen.add(player)
        elif freeze is False:
            frozen.discard(player)
        return BeliefState(dists, frozen, self.iteration)

    def argmax(self, player: int) -> int:
        # ties resolve to the lowest strategy index
        return int(np.argmax(self.distributions[player]))

    def max_probability(self, player: int) -> float:
        return float(self.distributions[player].max())

    def to_json(self) -> dict:
        return {"iteration": self.iteration,
                "players": [{"id": p, "frozen": p in self.frozen,
                             "probs": x.tolist()}
                            for p, x in self.distributions.items()]}

    @classmethod
    def from_json(cls, doc: dict) -> "BeliefState":
        return cls({e["id"]: np.array(e["probs"]) for e in doc["players"]},
                   [e["id"] for e in doc["players"] if e["frozen"]],
                   doc["iteration"])


def _is_one_hot(x: np.ndarray) -> bool:
    return np.count_nonzero(x) == 1 and x.max() == 1.0


def one_hot(size: int, index: int) -> np.ndarray:
    if not 0 <= index < size:
        raise ValidationError(f"one-hot index {index} out of range for size {size}")
    x = np.zeros(size)
    x[index] = 1.0
    return x


def init_beliefs(spaces: Sequence[StrategySpace],
                 anchors: Mapping[int, Pose] = {}) -> BeliefState:
    """Anchored players one-hot at their pose and frozen; the rest uniform."""
    by_id = {s.player: s for s in spaces}
    unknown = set(anchors) - set(by_id)
    if unknown:
        raise ValidationError(f"anchors name unknown players {sorted(unknown)}")
    dists = {}
    for player, space in by_id.items():
        if player in anchors:
            dists[player] = one_hot(len(space), space.index_of(anchors[player]))
        else:
            dists[player] = np.full(len(space), 1.0 / len(space))
    return BeliefState(dists, frozen=set(anchors), iteration=0)


@dataclass
class ConvergenceReport:
    iterations: int
    converged: bool
    paused: bool
    final_delta: float
    consistency: list[float] = field(default_factory=list)  # one value per visited state
    wall_time_s: float = 0.0


def _payoff_all(store: PayoffStore, beliefs: BeliefState) -> dict[int, np.ndarray]:
    return {p: expected_payoff_vector(store, beliefs, p) for p in beliefs.distributions}


def average_consistency(store: PayoffStore, beliefs: BeliefState) -> float:
    """sum_i sum_h x_ih * pi_ih(x); the quantity the dynamics never decrease."""
    payoffs = _payoff_all(store, beliefs)
    return sum(float(beliefs.distributions[p] @ payoffs[p]) for p in sorted(payoffs))


def _step(beliefs: BeliefState, payoffs: Mapping[int, np.ndarray],
          stall_guard: bool) -> BeliefState:
    new_dists: dict[int, np.ndarray] = {}
    for player, x in beliefs.distributions.items():
        if player in beliefs.frozen:
            new_dists[player] = x
            continue
        pi = payoffs[player]
        if np.isnan(pi).any() or pi.min() < 0:
            raise FrescoError(f"player {player}: invalid expected payoffs")
        weighted = x * pi
        denom = weighted.sum()
        if denom <= 0.0:
            if not stall_guard:
                raise FrescoError(f"player {player}: zero payoff denominator")
            new_dists[player] = x
        else:
            nxt = weighted / denom
            new_dists[player] = nxt / nxt.sum()
    return BeliefState(new_dists, beliefs.frozen, beliefs.iteration + 1)


def replicator_step(beliefs: BeliefState, store: PayoffStore,
                    stall_guard: bool = True) -> BeliefState:
    """One synchronous update of all non-frozen players from the same snapshot."""
    return _step(beliefs, _payoff_all(store, beliefs), stall_guard)


def max_belief_delta(a: BeliefState, b: BeliefState) -> float:
    return max(float(np.abs(b.distributions[p] - a.distributions[p]).sum())
               for p in a.distributions)


def run_until_converged(
    beliefs: BeliefState,
    store: PayoffStore,
    cfg: SolverConfig = SolverConfig(),
    observer: Optional[Callable[[BeliefState], Optional[bool]]] = None,
) -> tuple[BeliefState, ConvergenceReport]:
    """Iterate until the max per-player L1 change drops below tolerance.

    The observer fires after every step with the read-only new state; a truthy
    return pauses the run, returning the state as-is (resumable). The report
    carries the average-consistency value of every visited state.
    """
    t0 = time.perf_counter()
    consistency: list[float] = []
    delta = 0.0
    steps = 0
    while steps < cfg.max_iters:
        payoffs = _payoff_all(store, beliefs)
        consistency.append(sum(float(beliefs.distributions[p] @ payoffs[p])
                               for p in sorted(payoffs)))
        nxt = _step(beliefs, payoffs, cfg.stall_guard)
        delta = max_belief_delta(beliefs, nxt)
        beliefs = nxt
        steps += 1
        pause = observer(beliefs) if observer is not None else None
        if delta < cfg.convergence_tol:
            consistency.append(average_consistency(store, beliefs))
            return beliefs, ConvergenceReport(steps, True, False, delta, consistency,
                                              time.perf_counter() - t0)
        if pause:
            consistency.append(average_consistency(store, beliefs))
            return beliefs, ConvergenceReport(steps, False, True, delta, consistency,
                                              time.perf_counter() - t0)
    consistency.append(average_consistency(store, beliefs))
    return beliefs, ConvergenceReport(steps, False, False, delta, consistency,
                                      time.perf_counter() - t0)


def argmax_assembly(beliefs: BeliefState,
                    spaces: Sequence[StrategySpace]) -> dict[int, Pose]:
    """Most-likely pose per player; ties go to the lowest pose index."""
    by_id = {s.player: s for s in spaces}
    missing = set(beliefs.distributions) - set(by_id)
    if missing:
        raise ValidationError(f"no strategy space for players {sorted(missing)}")
    return {p: by_id[p].poses[beliefs.argmax(p)] for p in sorted(beliefs.distributions)}
