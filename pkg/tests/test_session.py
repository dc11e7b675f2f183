"""Interactive session protocol: candidate review, locking, steering, replay."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import harness_config
from fresco.errors import FrescoError, SessionError
from fresco.model import Pose
from fresco.session import (
    MODE_CIR,
    MODE_IA,
    STATUS_COMPLETE,
    STATUS_CONVERGED,
    STATUS_PAUSED,
    STATUS_RUNNING,
    OracleConfig,
    SessionConfig,
    Verdict,
    apply_verification,
    assembly_to_json,
    mapped_ground_truth,
    oracle_user,
    propose_candidates,
    replay,
    run_auto,
    run_cir,
    run_ia_round,
    run_oracle_ia,
    save_session,
    session_assembly,
    session_doc,
    start_session,
)


@pytest.fixture()
def ia(puzzle6):
    return start_session(puzzle6, MODE_IA, seed_choice=puzzle6.fragment_ids[0],
                         config=harness_config())


@pytest.fixture()
def cir(puzzle6):
    return start_session(puzzle6, MODE_CIR, seed_choice=puzzle6.fragment_ids[0],
                         config=harness_config())


@pytest.fixture(scope="module")
def finished_ia(puzzle6):
    return run_oracle_ia(puzzle6, config=harness_config())


def test_seed_is_locked_at_board_center(ia, puzzle6):
    origin = Pose(puzzle6.board.cols // 2, puzzle6.board.rows // 2, 0)
    assert ia.origin == origin
    assert ia.locked == {ia.seed_id: origin}
    assert ia.status == STATUS_RUNNING
    idx = ia.spaces[ia.seed_id].index_of(origin)
    dist = ia.beliefs.distributions[ia.seed_id]
    assert dist[idx] == 1.0 and dist.sum() == 1.0
    assert ia.seed_id in ia.beliefs.frozen
    assert ia.event_log[0].kind == "seed_selected"


def test_candidates_are_unlocked_and_bounded(ia):
    picks = propose_candidates(ia)
    assert 0 < len(picks) <= ia.config.top_k_neighbors
    assert ia.seed_id not in picks
    assert len(set(picks)) == len(picks)


def test_ia_round_pauses_with_proposals(ia):
    picks = propose_candidates(ia)
    ia.candidates = [(fid, 0.0) for fid in picks]
    run_ia_round(ia)
    assert ia.status == STATUS_PAUSED
    assert set(ia.proposals) == set(picks)
    for fid, pose in ia.proposals.items():
        assert ia.puzzle.board.contains_cell(pose.x, pose.y)


def _paused_round(state):
    picks = propose_candidates(state)
    state.candidates = [(fid, 0.0) for fid in picks]
    run_ia_round(state)
    return picks


def test_lock_verdict_freezes_one_hot(ia):
    picks = _paused_round(ia)
    target = picks[0]
    pose = ia.proposals[target]
    apply_verification(ia, [Verdict(target, "lock", None)])
    assert ia.locked[target] == pose
    idx = ia.spaces[target].index_of(pose)
    dist = ia.beliefs.distributions[target]
    assert dist[idx] == 1.0 and np.count_nonzero(dist) == 1
    assert target in ia.beliefs.frozen


def test_previously_locked_beliefs_survive_unchanged(ia):
    picks = _paused_round(ia)
    seed_before = ia.beliefs.distributions[ia.seed_id].copy()
    apply_verification(ia, [Verdict(picks[0], "lock", None)])
    assert np.array_equal(ia.beliefs.distributions[ia.seed_id], seed_before)


def test_unlocked_beliefs_reset_to_uniform(ia):
    picks = _paused_round(ia)
    apply_verification(ia, [Verdict(picks[0], "lock", None)])
    for fid in ia.unlocked():
        dist = ia.beliefs.distributions[fid]
        assert dist == pytest.approx(np.full(len(dist), 1.0 / len(dist)), abs=0)


def test_uniform_reset_can_be_disabled(puzzle6):
    cfg = harness_config()
    cfg = SessionConfig(compat=cfg.compat, solver=cfg.solver,
                        uniform_reset=False)
    state = start_session(puzzle6, MODE_IA, puzzle6.fragment_ids[0], cfg)
    picks = _paused_round(state)
    before = {fid: state.beliefs.distributions[fid].copy()
              for fid in state.unlocked() if fid != picks[0]}
    apply_verification(state, [Verdict(picks[0], "lock", None)])
    for fid, dist in before.items():
        assert np.array_equal(state.beliefs.distributions[fid], dist)


def test_move_and_lock_overrides_pose(ia, puzzle6):
    picks = _paused_round(ia)
    target = picks[0]
    gt = mapped_ground_truth(ia)[target]
    apply_verification(ia, [Verdict(target, "move_and_lock", gt)])
    assert ia.locked[target] == gt
    idx = ia.spaces[target].index_of(gt)
    assert ia.beliefs.distributions[target][idx] == 1.0


def test_move_and_lock_extends_the_pose_grid(ia):
    picks = _paused_round(ia)
    target = picks[0]
    # a pose outside the restricted candidate grid but on the board
    outside = Pose(1, 1, 1)
    n_before = len(ia.spaces[target].poses)
    if ia.spaces[target].index_of(outside) is not None:
        outside = Pose(1, 2, 3)
    apply_verification(ia, [Verdict(target, "move_and_lock", outside)])
    assert ia.locked[target] == outside
    assert len(ia.spaces[target].poses) >= n_before


def test_rejected_candidate_sits_out_next_round(ia):
    picks = _paused_round(ia)
    victim = picks[0]
    verdicts = [Verdict(victim, "reject", None)]
    if len(picks) > 1:
        verdicts.append(Verdict(picks[1], "lock", None))
    apply_verification(ia, verdicts)
    assert victim not in ia.locked
    next_picks = propose_candidates(ia)
    assert victim not in next_picks


def test_round_counter_and_status_advance(ia, puzzle6):
    rounds = 0
    while ia.status != STATUS_COMPLETE and rounds < 3 * len(puzzle6.fragments):
        picks = _paused_round(ia)
        gt = mapped_ground_truth(ia)
        apply_verification(ia, [Verdict(f, "move_and_lock", gt[f]) for f in picks])
        rounds += 1
    assert ia.status == STATUS_COMPLETE
    assert set(ia.locked) == set(ia.fragment_ids)


def test_duplicate_verdicts_are_rejected(ia):
    picks = _paused_round(ia)
    with pytest.raises(FrescoError):
        apply_verification(ia, [Verdict(picks[0], "lock", None),
                                Verdict(picks[0], "reject", None)])


def test_unknown_player_is_rejected(ia):
    _paused_round(ia)
    with pytest.raises(FrescoError):
        apply_verification(ia, [Verdict(999, "lock", None)])


def test_relocking_a_locked_fragment_is_rejected(ia):
    _paused_round(ia)
    with pytest.raises(SessionError):
        apply_verification(ia, [Verdict(ia.seed_id, "lock", None)])


def test_off_board_move_is_rejected(ia):
    picks = _paused_round(ia)
    with pytest.raises(FrescoError):
        apply_verification(ia, [Verdict(picks[0], "move_and_lock",
                                        Pose(-5, 0, 0))])


def test_ia_lock_requires_candidate_membership(ia):
    picks = _paused_round(ia)
    outsider = next(f for f in ia.unlocked() if f not in picks)
    with pytest.raises(FrescoError):
        apply_verification(ia, [Verdict(outsider, "lock", None)])


def test_cir_runs_to_convergence(cir):
    run_cir(cir)
    assert cir.status == STATUS_CONVERGED
    kinds = [e.kind for e in cir.event_log]
    assert "solver_converged" in kinds


def test_cir_pause_resume_and_verdicts(puzzle5):
    state = start_session(puzzle5, MODE_CIR, puzzle5.fragment_ids[0],
                          harness_config(max_iters=8000))
    run_cir(state, pause_at_iteration=5)
    assert state.status == STATUS_PAUSED
    assert state.beliefs.iteration == 5
    gt = mapped_ground_truth(state)
    target = next(iter(state.unlocked()))
    apply_verification(state, [Verdict(target, "move_and_lock", gt[target])])
    assert state.locked[target] == gt[target]
    run_cir(state)
    assert state.status == STATUS_CONVERGED
    kinds = [e.kind for e in state.event_log]
    assert "pause" in kinds and "solver_converged" in kinds


def test_cir_resume_without_verdicts_is_logged(puzzle5):
    state = start_session(puzzle5, MODE_CIR, puzzle5.fragment_ids[0],
                          harness_config(max_iters=8000))
    run_cir(state, pause_at_iteration=3)
    assert state.status == STATUS_PAUSED
    run_cir(state)
    kinds = [e.kind for e in state.event_log]
    assert "resume" in kinds
    assert state.status == STATUS_CONVERGED


def test_mapped_ground_truth_fixes_the_seed(puzzle6):
    for seed in puzzle6.fragment_ids[:3]:
        state = start_session(puzzle6, MODE_IA, seed, config=harness_config())
        mapped = mapped_ground_truth(state)
        assert mapped[seed] == state.origin
        assert set(mapped) == set(puzzle6.fragment_ids)
        for pose in mapped.values():
            assert 0 <= pose.theta < len(puzzle6.rotations)


def test_mapped_ground_truth_preserves_relative_offsets(puzzle6):
    state = start_session(puzzle6, MODE_IA, puzzle6.fragment_ids[0],
                          config=harness_config())
    gt = puzzle6.ground_truth
    mapped = mapped_ground_truth(state)
    ids = puzzle6.fragment_ids
    seed_theta = gt[state.seed_id].theta
    if seed_theta == 0:  # pure translation: offsets carry over verbatim
        for a in ids:
            for b in ids:
                assert (mapped[a].x - mapped[b].x == gt[a].x - gt[b].x)
                assert (mapped[a].y - mapped[b].y == gt[a].y - gt[b].y)


def test_oracle_locks_correct_proposals(ia):
    _paused_round(ia)
    gt = mapped_ground_truth(ia)
    verdicts = oracle_user(ia, OracleConfig(corrections_per_round=2))
    assert verdicts
    for v in verdicts:
        if v.action == "lock":
            assert ia.proposals[v.player] == gt[v.player]
        elif v.action == "move_and_lock":
            assert v.pose == gt[v.player]
    apply_verification(ia, verdicts)
    for fid, pose in ia.locked.items():
        assert pose == gt[fid]


def test_oracle_session_completes(finished_ia):
    assert finished_ia.status == STATUS_COMPLETE
    assert session_assembly(finished_ia) == mapped_ground_truth(finished_ia)


def test_event_log_is_ordered_and_typed(finished_ia):
    state = finished_ia
    rounds = [e.round for e in state.event_log]
    assert rounds == sorted(rounds)
    kinds = {e.kind for e in state.event_log}
    assert "seed_selected" in kinds
    assert kinds & {"lock", "move_and_lock"}
    for e in state.event_log:
        if e.kind in ("lock", "move_and_lock"):
            assert e.pose is not None and e.player is not None


def test_session_doc_round_trips_and_replays(finished_ia, puzzle6, tmp_path):
    state = finished_ia
    path = save_session(state, tmp_path / "session.json")
    reproduced = replay(puzzle6, path)
    assert assembly_to_json(reproduced) == assembly_to_json(session_assembly(state))


def test_cir_session_replay_is_exact(puzzle6):
    from fresco.session import run_oracle_cir
    state = run_oracle_cir(puzzle6, config=harness_config())
    doc = session_doc(state)
    reproduced = replay(puzzle6, doc)
    assert assembly_to_json(reproduced) == assembly_to_json(session_assembly(state))


def test_auto_run_produces_full_assembly(puzzle6):
    asm, report = run_auto(puzzle6, config=harness_config())
    assert set(asm) == set(puzzle6.fragment_ids)
    assert report.iterations > 0
