"""Command-line front end.

    fresco generate OUT [...]        synthesize a puzzle dataset
    fresco seed-rank PUZZLE          rank fragments as starting seeds
    fresco solve PUZZLE              auto solver or scripted-user session
    fresco eval PUZZLE ASSEMBLY      score an assembly against ground truth
    fresco bench PUZZLE [PUZZLE...]  auto vs scripted-user comparison table
    fresco replay PUZZLE SESSION     re-run a recorded session headlessly
    fresco serve PUZZLE              start the session service

Heavy flags mirror the config dataclasses; anything not exposed here keeps
its default.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .compat import CompatConfig, PayoffStore, build_payoff_store
from .errors import FrescoError, ValidationError
from .metrics import BenchRow, emit_report, evaluate
from .model import Pose, build_strategy_space, load_puzzle
from .datagen import GenConfig, generate_puzzle
from .seeding import SeedConfig, rank_seeds
from .session import (OracleConfig, SessionConfig, assembly_to_json, replay,
                      run_auto, run_oracle_cir, run_oracle_ia, save_session,
                      session_assembly)
from .solver import SolverConfig


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h)


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("weights must be w_shape,w_color,w_motif")
    return tuple(parts)  # type: ignore[return-value]


def _add_compat_flags(p: argparse.ArgumentParser):
    p.add_argument("--contact-width", type=int, default=None,
                   help="contact band width in px")
    p.add_argument("--sigma-color", type=float, default=None)
    p.add_argument("--weights", type=_parse_weights, default=None,
                   metavar="WS,WC,WM")
    p.add_argument("--score-floor", type=float, default=None)
    p.add_argument("--radius", type=int, default=None,
                   help="interaction radius in cells (default: derived)")


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="convergence tolerance on max belief change")


def _add_oracle_flags(p: argparse.ArgumentParser):
    p.add_argument("--pos-tol", type=int, default=0,
                   help="scripted-user position tolerance in cells")
    p.add_argument("--rot-tol", type=int, default=0,
                   help="scripted-user rotation tolerance in steps")
    p.add_argument("--corrections", type=int, default=1,
                   help="manual corrections per verification round")


def _session_config(args) -> SessionConfig:
    compat_kw = {}
    if getattr(args, "contact_width", None) is not None:
        compat_kw["contact_width_px"] = args.contact_width
    if getattr(args, "sigma_color", None) is not None:
        compat_kw["sigma_color"] = args.sigma_color
    if getattr(args, "weights", None) is not None:
        compat_kw["weights"] = args.weights
    if getattr(args, "score_floor", None) is not None:
        compat_kw["score_floor"] = args.score_floor
    if getattr(args, "radius", None) is not None:
        compat_kw["interaction_radius_cells"] = args.radius
    solver_kw = {}
    if getattr(args, "max_iters", None) is not None:
        solver_kw["max_iters"] = args.max_iters
    if getattr(args, "tol", None) is not None:
        solver_kw["convergence_tol"] = args.tol
    kw = {}
    if getattr(args, "top_k_neighbors", None) is not None:
        kw["top_k_neighbors"] = args.top_k_neighbors
    if getattr(args, "no_uniform_reset", False):
        kw["uniform_reset"] = False
    return SessionConfig(compat=CompatConfig(**compat_kw),
                         solver=SolverConfig(**solver_kw), **kw)


def _oracle_config(args) -> OracleConfig:
    return OracleConfig(pos_tol_cells=args.pos_tol, rot_tol_steps=args.rot_tol,
                        corrections_per_round=args.corrections)


def _cached_store(puzzle, config: SessionConfig, cache: str | None) -> PayoffStore | None:
    if cache is None:
        return None
    path = Path(cache)
    if path.exists():
        return PayoffStore.load(path)
    spaces = [build_strategy_space(f, puzzle.board, puzzle.rotations)
              for f in puzzle.fragments]
    store = build_payoff_store(puzzle, spaces, config.compat)
    store.save(path)
    return store


def _load_assembly(path: str) -> dict[int, Pose]:
    try:
        doc = json.loads(Path(path).read_text())
        if "assembly" in doc:  # accept a session doc too
            doc = doc["assembly"]
        return {int(fid): Pose(*pose) for fid, pose in doc.items()}
    except (json.JSONDecodeError, TypeError, ValueError, KeyError) as exc:
        raise ValidationError(f"{path}: not an assembly file ({exc})") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    cfg = GenConfig(n_fragments=args.fragments, erosion_px=args.erosion,
                    drop_fraction=args.drop, rng_seed=args.seed,
                    source_image=args.image, pattern=args.pattern,
                    size=_parse_size(args.size), n_rotations=args.rotations)
    puzzle = generate_puzzle(cfg, out_dir=args.out)
    print(f"wrote {len(puzzle.fragments)} fragments to {args.out} "
          f"(board {puzzle.board.cols}x{puzzle.board.rows}, "
          f"cell {puzzle.board.cell_size_px}px)")
    return 0


def _cmd_seed_rank(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    cfg = SeedConfig(alpha=args.alpha, top_k=args.top_k)
    ranking = rank_seeds(puzzle, cfg)
    if args.json:
        print(json.dumps(ranking.to_json(), indent=1))
        return 0
    print(f"{'id':>4} {'P':>3} {'C':>7} {'S':>7}  proposed")
    for e in ranking.entries:
        print(f"{e.fragment_id:>4} {e.p:>3.0f} {e.c:>7.4f} {e.s:>7.4f}"
              f"  {'*' if e.proposed else ''}")
    return 0


def _cmd_solve(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    config = _session_config(args)
    store = _cached_store(puzzle, config, args.cache_payoffs)
    t0 = time.perf_counter()
    if args.mode == "auto":
        assembly, report = run_auto(puzzle, config, seed_choice=args.seed_fragment,
                                    store=store)
        state = None
    else:
        runner = run_oracle_ia if args.mode == "ia" else run_oracle_cir
        state = runner(puzzle, config, _oracle_config(args),
                       seed_choice=args.seed_fragment, store=store)
        assembly = session_assembly(state)
    elapsed = time.perf_counter() - t0

    if args.out:
        Path(args.out).write_text(assembly_to_json(assembly))
    if args.session_out:
        if state is None:
            print("--session-out only applies to ia/cir runs", file=sys.stderr)
        else:
            save_session(state, args.session_out, puzzle_path=str(args.puzzle))
    line = f"{args.mode}: {len(assembly)} fragments in {elapsed:.1f}s"
    if puzzle.ground_truth:
        ev = evaluate(puzzle, assembly)
        line += f"  q_pos={ev.q_pos:.3f} rmse={ev.rmse_px:.2f}px"
    if state is not None:
        line += f"  rounds={state.round} status={state.status}"
    print(line)
    return 0


def _cmd_eval(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    report = evaluate(puzzle, _load_assembly(args.assembly))
    print(json.dumps(report.to_json(), indent=1))
    return 0


def _cmd_bench(args) -> int:
    rows = []
    config = _session_config(args)
    oracle = _oracle_config(args)
    for path in args.puzzles:
        puzzle = load_puzzle(path)
        group = Path(path).name
        cache = str(Path(path) / "payoffs.json") if args.cache_payoffs else None
        store = _cached_store(puzzle, config, cache)
        t0 = time.perf_counter()
        assembly, _ = run_auto(puzzle, config, store=store)
        auto_t = time.perf_counter() - t0
        ev = evaluate(puzzle, assembly) if puzzle.ground_truth else None
        rows.append(BenchRow(group, "Auto RL", auto_t,
                             ev.q_pos if ev else None, ev.rmse_px if ev else None))
        t0 = time.perf_counter()
        state = run_oracle_ia(puzzle, config, oracle, store=store)
        hil_t = time.perf_counter() - t0
        ev = (evaluate(puzzle, session_assembly(state))
              if puzzle.ground_truth else None)
        rows.append(BenchRow(group, "HIL-IA", hil_t,
                             ev.q_pos if ev else None, ev.rmse_px if ev else None))
    text, csv_text = emit_report(rows)
    print(text)
    if args.csv:
        Path(args.csv).write_text(csv_text)
        print(f"csv written to {args.csv}")
    return 0


def _cmd_replay(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    assembly = replay(puzzle, args.session)
    out = assembly_to_json(assembly)
    if args.out:
        Path(args.out).write_text(out)
    else:
        print(out)
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.puzzle, mode=args.mode, config=_session_config(args),
          port=args.port, host=args.host, headless=args.headless,
          multi=args.multi, oracle=_oracle_config(args),
          snapshot_cadence=args.cadence)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fresco", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a puzzle dataset")
    p.add_argument("out")
    p.add_argument("--fragments", type=int, default=12)
    p.add_argument("--erosion", type=int, default=0, help="gap erosion in px")
    p.add_argument("--drop", type=float, default=0.0,
                   help="fraction of fragments to discard")
    p.add_argument("--seed", type=int, default=0, help="rng seed")
    p.add_argument("--pattern", choices=("mosaic", "stripes"), default="mosaic")
    p.add_argument("--size", default="640x480", help="image size WxH")
    p.add_argument("--rotations", type=int, default=4)
    p.add_argument("--image", default=None, help="source image instead of a pattern")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("seed-rank", help="rank fragments as starting seeds")
    p.add_argument("puzzle")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_seed_rank)

    p = sub.add_parser("solve", help="run the solver on a puzzle")
    p.add_argument("puzzle")
    p.add_argument("--mode", choices=("auto", "ia", "cir"), default="auto")
    p.add_argument("--seed-fragment", type=int, default=None)
    p.add_argument("--out", default=None, help="assembly json path")
    p.add_argument("--session-out", default=None, help="session log path")
    p.add_argument("--cache-payoffs", default=None, metavar="PATH",
                   help="load the payoff store from PATH, or build and save it")
    p.add_argument("--top-k-neighbors", type=int, default=None)
    p.add_argument("--no-uniform-reset", action="store_true")
    _add_compat_flags(p)
    _add_solver_flags(p)
    _add_oracle_flags(p)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eval", help="score an assembly against ground truth")
    p.add_argument("puzzle")
    p.add_argument("assembly")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="auto vs scripted-user comparison")
    p.add_argument("puzzles", nargs="+")
    p.add_argument("--csv", default=None)
    p.add_argument("--cache-payoffs", action="store_true",
                   help="cache payoffs.json inside each puzzle directory")
    _add_compat_flags(p)
    _add_solver_flags(p)
    _add_oracle_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("replay", help="re-run a recorded session")
    p.add_argument("puzzle")
    p.add_argument("session")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="start the session service")
    p.add_argument("puzzle")
    p.add_argument("--mode", choices=("ia", "cir"), default="ia")
    p.add_argument("--port", type=int, default=7341)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--headless", action="store_true",
                   help="attach scripted-user suggestions for CI clients")
    p.add_argument("--multi", action="store_true",
                   help="allow more than one concurrent session")
    p.add_argument("--cadence", type=int, default=10,
                   help="snapshot every N solver iterations")
    _add_compat_flags(p)
    _add_solver_flags(p)
    _add_oracle_flags(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FrescoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
