"""Interactive fragment reassembly on a discrete pose grid.

Fragments are players in a sparse polymatrix game whose payoffs fuse shape,
color and motif agreement; discrete replicator dynamics drive beliefs toward
a consistent assembly, and a human (or a scripted stand-in) steers the run by
locking, correcting and rejecting placements.
"""

from .compat import (CompatConfig, CompatEngine, PayoffStore, build_payoff_store,
                     expected_payoff, expected_payoff_vector, pair_score)
from .datagen import GenConfig, generate_puzzle, import_fragment_archive
from .errors import FrescoError, PuzzleFormatError, SessionError, ValidationError
from .metrics import BenchRow, EvalReport, FragmentEval, emit_report, evaluate
from .model import (Board, Fragment, Pose, PuzzleDataset, StrategySpace,
                    build_strategy_space, default_cell_size, load_puzzle,
                    rasterize, save_puzzle)
from .seeding import (SeedConfig, SeedEntry, SeedRanking, color_diversity_score,
                      perpendicularity_score, rank_seeds)
from .session import (MODE_CIR, MODE_IA, OracleConfig, SessionConfig, SessionEvent,
                      SessionState, Verdict, apply_verification, assembly_to_json,
                      mapped_ground_truth, neighbor_suitability, oracle_user,
                      propose_candidates, replay, run_auto, run_cir, run_ia_round,
                      run_oracle_cir, run_oracle_ia, save_session, session_assembly,
                      start_session)
from .solver import (BeliefState, ConvergenceReport, SolverConfig, argmax_assembly,
                     average_consistency, init_beliefs, replicator_step,
                     run_until_converged)

__version__ = "0.1.0"

__all__ = [
    "Board", "BeliefState", "BenchRow", "CompatConfig", "CompatEngine",
    "ConvergenceReport", "EvalReport", "Fragment", "FragmentEval", "FrescoError",
    "GenConfig", "MODE_CIR", "MODE_IA", "OracleConfig", "PayoffStore", "Pose",
    "PuzzleDataset", "PuzzleFormatError", "SeedConfig", "SeedEntry", "SeedRanking",
    "SessionConfig", "SessionError", "SessionEvent", "SessionState", "SolverConfig",
    "StrategySpace", "ValidationError", "Verdict", "apply_verification",
    "argmax_assembly", "assembly_to_json", "average_consistency",
    "build_payoff_store", "build_strategy_space", "color_diversity_score",
    "default_cell_size", "emit_report", "evaluate", "expected_payoff",
    "expected_payoff_vector", "generate_puzzle", "import_fragment_archive",
    "init_beliefs", "load_puzzle", "mapped_ground_truth", "neighbor_suitability",
    "oracle_user", "pair_score", "perpendicularity_score", "propose_candidates",
    "rank_seeds", "rasterize", "replay", "replicator_step", "run_auto", "run_cir",
    "run_ia_round", "run_oracle_cir", "run_oracle_ia", "run_until_converged",
    "save_puzzle", "save_session", "session_assembly", "start_session",
]
