"""Network front door for interactive sessions.

HTTP handles the session lifecycle (create, inspect, export); a persistent
WebSocket per session carries commands in and snapshots out. Every payload is
JSON inside a versioned envelope:

    {"v": 1, "type": <wire type>, "session": <id>, "seq": <int>, "payload": {...}}

Sequence numbers increase monotonically per sender; stale or malformed
inbound messages get an error reply that echoes the offending payload and
leaves the session untouched.

The session loop owns all state. Command handlers only enqueue; the loop
drains the queue between solver segments, so a snapshot never captures a
half-applied command. Solver segments run on a worker thread and report
interim beliefs through an observer, which emits a snapshot every
`snapshot_cadence` iterations. Slow subscribers lose intermediate snapshots,
never command responses.

With --headless the service attaches scripted-user suggestions (the same
oracle used by the CLI runners) to candidates and pause messages so that a
thin client can drive a full session without reimplementing verification
logic.
"""

from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .errors import FrescoError, SessionError, ValidationError
from .metrics import evaluate
from .model import Pose, PuzzleDataset, load_puzzle
from .seeding import rank_seeds
from .session import (MODE_CIR, MODE_IA, STATUS_COMPLETE, STATUS_CONVERGED,
                      STATUS_PAUSED, OracleConfig, SessionConfig, SessionState,
                      Verdict, apply_verification, assembly_to_json, oracle_user,
                      propose_candidates, run_cir, run_ia_round, session_assembly,
                      session_doc, start_session)
from .solver import BeliefState

WIRE_VERSION = 1
WIRE_TYPES = frozenset({
    "session_started", "snapshot", "candidates", "verdicts", "pause", "resume",
    "lock", "move_and_lock", "reject", "seed_options", "select_seed", "report",
    "error",
})
DEFAULT_PORT = 7341
SNAPSHOT_CADENCE = 10
_SUBSCRIBER_HIGH_WATER = 64


class ProtocolError(FrescoError):
    def __init__(self, message: str, echo: Any = None):
        super().__init__(message)
        self.echo = echo


def parse_wire(raw: Any) -> tuple[str, str | None, int, dict]:
    """Validate an inbound envelope; returns (type, session, seq, payload)."""
    if not isinstance(raw, dict):
        raise ProtocolError("message must be a JSON object", raw)
    if raw.get("v") != WIRE_VERSION:
        raise ProtocolError(f"unsupported protocol version {raw.get('v')!r}", raw)
    mtype = raw.get("type")
    if mtype not in WIRE_TYPES:
        raise ProtocolError(f"unknown message type {mtype!r}", raw)
    seq = raw.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ProtocolError("seq must be a nonnegative integer", raw)
    payload = raw.get("payload")
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object", raw)
    return mtype, raw.get("session"), seq, payload


def _pose_list(pose: Pose) -> list[int]:
    return [pose.x, pose.y, pose.theta]


def _parse_pose(payload: dict) -> Pose:
    pose = payload.get("pose")
    if (not isinstance(pose, (list, tuple)) or len(pose) != 3
            or not all(isinstance(v, int) for v in pose)):
        raise ProtocolError("pose must be [x, y, theta] with integers", payload)
    return Pose(*pose)


def snapshot_payload(state: SessionState,
                     overlay: Optional[BeliefState] = None,
                     overlay_spaces: Optional[dict] = None) -> dict:
    """Per-fragment argmax pose, confidence, locked flag and last event kind.

    Size is independent of the strategy-space sizes: distributions stay on
    the server, only their argmax and maximum cross the wire. `overlay`
    carries interim beliefs of a running round solve; fragments it does not
    cover fall back to the session beliefs.
    """
    fragments = []
    for fid in state.fragment_ids:
        if fid in state.locked:
            pose, conf = state.locked[fid], 1.0
        elif overlay is not None and fid in overlay.distributions:
            space = overlay_spaces[fid]
            pose = space.poses[overlay.argmax(fid)]
            conf = overlay.max_probability(fid)
        else:
            pose = state.spaces[fid].poses[state.beliefs.argmax(fid)]
            conf = state.beliefs.max_probability(fid)
        fragments.append({"id": fid, "pose": _pose_list(pose),
                          "confidence": conf, "locked": fid in state.locked,
                          "last_event": state.last_event.get(fid)})
    iteration = state.beliefs.iteration if overlay is None else overlay.iteration
    return {"round": state.round, "status": state.status, "iteration": iteration,
            "mode": state.mode, "fragments": fragments}


def _verdicts_json(verdicts: list[Verdict]) -> list[dict]:
    return [v.to_json() for v in verdicts]


def _parse_verdicts(payload: dict) -> list[Verdict]:
    items = payload.get("verdicts")
    if not isinstance(items, list):
        raise ProtocolError("verdicts payload must contain a list", payload)
    out = []
    for item in items:
        try:
            out.append(Verdict.from_json(item))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed verdict: {exc}", item)
    return out


@dataclass
class _Command:
    mtype: str
    payload: dict
    seq: int


class LiveSession:
    """One interactive session plus its network plumbing."""

    def __init__(self, sid: str, puzzle: PuzzleDataset, mode: str,
                 config: SessionConfig, headless: bool, oracle: OracleConfig,
                 snapshot_cadence: int = SNAPSHOT_CADENCE):
        self.id = sid
        self.puzzle = puzzle
        self.mode = mode
        self.config = config
        self.headless = headless
        self.oracle = oracle
        self.snapshot_cadence = max(1, snapshot_cadence)
        self.ranking = rank_seeds(puzzle, config.seed_ranking)
        self.state: Optional[SessionState] = None
        self.commands: asyncio.Queue[_Command] = asyncio.Queue()
        self.subscribers: list[asyncio.Queue] = []
        self.seq = 0
        self.solver_active = False
        self._pause_flag = threading.Event()
        self.task: Optional[asyncio.Task] = None
        self.loop = asyncio.get_event_loop()
        self.closed = False

    # -- outbound -------------------------------------------------------------

    def _send(self, mtype: str, payload: dict):
        self.seq += 1
        msg = {"v": WIRE_VERSION, "type": mtype, "session": self.id,
               "seq": self.seq, "payload": payload}
        for q in self.subscribers:
            if mtype == "snapshot" and q.qsize() >= _SUBSCRIBER_HIGH_WATER:
                continue  # drop intermediate snapshots for slow readers
            q.put_nowait(msg)

    def _send_threadsafe(self, mtype: str, payload: dict):
        self.loop.call_soon_threadsafe(self._send, mtype, payload)

    def seed_options_payload(self) -> dict:
        return {"alpha": self.ranking.alpha,
                "options": [{"fragment_id": e.fragment_id, "p": e.p, "c": e.c,
                             "s": e.s, "proposed": e.proposed}
                            for e in self.ranking.entries if e.proposed]}

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        self.subscribers.append(q)
        return q

    def unsubscribe(self, q: asyncio.Queue):
        if q in self.subscribers:
            self.subscribers.remove(q)

    # -- inbound --------------------------------------------------------------

    async def submit(self, cmd: _Command):
        if cmd.mtype in ("pause", "verdicts", "lock", "move_and_lock", "reject"):
            self._pause_flag.set()  # interrupt a running segment first
        await self.commands.put(cmd)

    # -- solver plumbing ------------------------------------------------------

    def _observer(self, beliefs: BeliefState) -> bool:
        if beliefs.iteration % self.snapshot_cadence == 0:
            overlay_spaces = {fid: self.state.round_spaces.get(fid)
                              or self.state.spaces[fid]
                              for fid in beliefs.distributions}
            self._send_threadsafe(
                "snapshot", snapshot_payload(self.state, beliefs, overlay_spaces))
        return self._pause_flag.is_set()

    def _emit_snapshot(self):
        self._send("snapshot", snapshot_payload(self.state))

    def _error(self, message: str, echo: Any = None):
        self._send("error", {"message": message, "echo": echo})

    # -- command handling (runs on the session loop, between solver work) -----

    def _apply_command(self, cmd: _Command) -> bool:
        """Returns True when the command changed verification state."""
        state = self.state
        try:
            if cmd.mtype == "verdicts":
                apply_verification(state, _parse_verdicts(cmd.payload))
            elif cmd.mtype in ("lock", "move_and_lock", "reject"):
                player = cmd.payload.get("player")
                if not isinstance(player, int):
                    raise ProtocolError("missing integer player", cmd.payload)
                if cmd.mtype == "lock":
                    pose = (_parse_pose(cmd.payload)
                            if cmd.payload.get("pose") is not None else None)
                    verdict = Verdict(player, "lock", pose)
                elif cmd.mtype == "move_and_lock":
                    verdict = Verdict(player, "move_and_lock", _parse_pose(cmd.payload))
                else:
                    verdict = Verdict(player, "reject")
                apply_verification(state, [verdict])
            else:
                self._error(f"command {cmd.mtype!r} not valid now", cmd.payload)
                return False
        except ProtocolError as exc:
            self._error(str(exc), exc.echo)
            return False
        except (ValidationError, SessionError) as exc:
            self._error(str(exc), cmd.payload)
            return False
        self._emit_snapshot()
        if state.status == STATUS_COMPLETE:
            self._finish()
        return True

    def _finish(self):
        payload = {"round": self.state.round,
                   "assembly": json.loads(assembly_to_json(session_assembly(self.state))),
                   "events": len(self.state.event_log)}
        if self.state.puzzle.ground_truth:
            report = evaluate(self.state.puzzle, session_assembly(self.state))
            payload["eval"] = {"q_pos": report.q_pos, "rmse_px": report.rmse_px}
        self._send("report", payload)

    # -- the session loop -----------------------------------------------------

    async def run(self):
        try:
            await self._await_seed()
            if self.mode == MODE_IA:
                await self._ia_loop()
            else:
                await self._cir_loop()
        except asyncio.CancelledError:
            raise
        except FrescoError as exc:
            self._error(f"session failed: {exc}")
        finally:
            self.closed = True

    async def _await_seed(self):
        while True:
            cmd = await self.commands.get()
            if cmd.mtype == "select_seed":
                fid = cmd.payload.get("fragment_id")
                try:
                    self.state = start_session(self.puzzle, self.mode, fid, self.config)
                except (ValidationError, SessionError) as exc:
                    self._error(str(exc), cmd.payload)
                    continue
                board = self.puzzle.board
                self._send("session_started", {
                    "mode": self.mode, "seed": fid,
                    "board": {"cols": board.cols, "rows": board.rows,
                              "cell_size_px": board.cell_size_px},
                    "rotations": list(self.puzzle.rotations),
                    "fragments": self.puzzle.fragment_ids,
                    "snapshot_cadence": self.snapshot_cadence})
                self._emit_snapshot()
                return
            self._error("select a seed first", cmd.payload)

    async def _ia_loop(self):
        state = self.state
        while state.status != STATUS_COMPLETE:
            propose_candidates(state)
            self._pause_flag.clear()
            self._interim = None
            await asyncio.to_thread(run_ia_round, state, self._observer)
            payload = {
                "round": state.round,
                "candidates": [{"fragment_id": fid, "suitability": score,
                                "proposal": _pose_list(state.proposals[fid])}
                               for fid, score in state.candidates]}
            if self.headless:
                payload["oracle_verdicts"] = _verdicts_json(
                    oracle_user(state, self.oracle))
            self._send("candidates", payload)
            self._emit_snapshot()
            while state.status == STATUS_PAUSED:
                cmd = await self.commands.get()
                self._pause_flag.clear()
                if cmd.mtype in ("pause", "resume"):
                    self._error(f"{cmd.mtype!r} has no effect between rounds",
                                cmd.payload)
                    continue
                if cmd.mtype == "select_seed":
                    self._error("seed already selected", cmd.payload)
                    continue
                self._apply_command(cmd)

    async def _cir_loop(self):
        state = self.state
        self.solver_active = True
        while state.status != STATUS_COMPLETE:
            if self.solver_active and state.status != STATUS_CONVERGED:
                self._pause_flag.clear()
                await asyncio.to_thread(run_cir, state, None, self._observer)
                self._emit_snapshot()
                self.solver_active = False
                payload = {"iteration": state.beliefs.iteration,
                           "converged": state.status == STATUS_CONVERGED}
                if self.headless:
                    payload["oracle_verdicts"] = _verdicts_json(
                        oracle_user(state, self.oracle))
                self._send("pause", payload)
                continue
            cmd = await self.commands.get()
            self._pause_flag.clear()
            if cmd.mtype == "pause":
                self._send("pause", {"iteration": state.beliefs.iteration})
            elif cmd.mtype == "resume":
                if state.status == STATUS_CONVERGED:
                    self._error("solver already converged; verify fragments",
                                cmd.payload)
                else:
                    self.solver_active = True
                    self._send("resume", {"iteration": state.beliefs.iteration})
            elif cmd.mtype == "select_seed":
                self._error("seed already selected", cmd.payload)
            else:
                self._apply_command(cmd)


class ServiceApp:
    """FastAPI wiring around a puzzle and a session factory."""

    def __init__(self, puzzle: PuzzleDataset, mode: str = MODE_IA,
                 config: Optional[SessionConfig] = None, headless: bool = False,
                 multi: bool = False, oracle: Optional[OracleConfig] = None,
                 snapshot_cadence: int = SNAPSHOT_CADENCE,
                 ui_dir: Optional[Path] = None,
                 pieces_dir: Optional[Path] = None):
        self.puzzle = puzzle
        self.mode = mode.lower()
        if self.mode not in (MODE_IA, MODE_CIR):
            raise ValidationError(f"unknown mode {mode!r}")
        self.config = config or SessionConfig()
        self.headless = headless
        self.multi = multi
        self.oracle = oracle or OracleConfig()
        self.snapshot_cadence = snapshot_cadence
        self.sessions: dict[str, LiveSession] = {}
        self._counter = 0
        self.app = FastAPI(title="fresco session service")
        self._routes(ui_dir, pieces_dir)

    def _routes(self, ui_dir: Optional[Path], pieces_dir: Optional[Path] = None):
        app = self.app

        @app.get("/healthz")
        async def healthz():
            return {"ok": True, "v": WIRE_VERSION}

        @app.post("/session")
        async def create_session(body: Optional[dict] = None):
            if self.sessions and not self.multi:
                live = [s for s in self.sessions.values() if not s.closed]
                if live:
                    return JSONResponse({"error": "a session is already active; "
                                         "restart with --multi for more"}, 409)
            body = body or {}
            mode = str(body.get("mode", self.mode)).lower()
            if mode not in (MODE_IA, MODE_CIR):
                return JSONResponse({"error": f"unknown mode {mode!r}"}, 422)
            self._counter += 1
            sid = f"s{self._counter}"
            sess = LiveSession(sid, self.puzzle, mode, self.config, self.headless,
                               self.oracle, self.snapshot_cadence)
            sess.task = asyncio.create_task(sess.run())
            self.sessions[sid] = sess
            return {"session": sid, "mode": mode, "v": WIRE_VERSION,
                    "seed_options": sess.seed_options_payload()}

        @app.get("/session/{sid}")
        async def session_info(sid: str):
            sess = self.sessions.get(sid)
            if sess is None:
                return JSONResponse({"error": "no such session"}, 404)
            if sess.state is None:
                return {"session": sid, "status": "awaiting_seed",
                        "seed_options": sess.seed_options_payload()}
            return {"session": sid, "snapshot": snapshot_payload(sess.state)}

        @app.get("/session/{sid}/log")
        async def session_log(sid: str):
            sess = self.sessions.get(sid)
            if sess is None:
                return JSONResponse({"error": "no such session"}, 404)
            if sess.state is None:
                return JSONResponse({"error": "session not started"}, 409)
            return session_doc(sess.state)

        @app.websocket("/session/{sid}/ws")
        async def session_ws(ws: WebSocket, sid: str):
            await ws.accept()
            sess = self.sessions.get(sid)
            if sess is None:
                await ws.send_json({"v": WIRE_VERSION, "type": "error",
                                    "session": sid, "seq": 0,
                                    "payload": {"message": "no such session"}})
                await ws.close()
                return
            outbound = sess.subscribe()
            sess._send("seed_options", sess.seed_options_payload())

            async def pump():
                try:
                    while True:
                        msg = await outbound.get()
                        await ws.send_json(msg)
                except Exception:
                    return  # socket went away; receive loop handles cleanup

            pump_task = asyncio.create_task(pump())
            last_seq = 0
            try:
                while True:
                    raw = await ws.receive_json()
                    try:
                        mtype, msid, seq, payload = parse_wire(raw)
                        if msid != sid:
                            raise ProtocolError("session id mismatch", raw)
                        if seq <= last_seq:
                            raise ProtocolError(
                                f"stale seq {seq} (last {last_seq})", raw)
                        last_seq = seq
                        if mtype not in ("select_seed", "pause", "resume", "lock",
                                         "move_and_lock", "reject", "verdicts"):
                            raise ProtocolError(
                                f"{mtype!r} is not a client command", raw)
                    except ProtocolError as exc:
                        sess._error(str(exc), exc.echo)
                        continue
                    await sess.submit(_Command(mtype, payload, seq))
            except WebSocketDisconnect:
                pass
            finally:
                pump_task.cancel()
                sess.unsubscribe(outbound)

        if pieces_dir and pieces_dir.is_dir():
            from fastapi.staticfiles import StaticFiles
            app.mount("/pieces", StaticFiles(directory=str(pieces_dir)),
                      name="pieces")  # fragment artwork for browser clients
        if ui_dir and ui_dir.is_dir():
            from fastapi.staticfiles import StaticFiles
            app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                      name="ui")


def build_app(puzzle_path: str | Path, mode: str = MODE_IA,
              config: Optional[SessionConfig] = None, headless: bool = False,
              multi: bool = False, oracle: Optional[OracleConfig] = None,
              snapshot_cadence: int = SNAPSHOT_CADENCE,
              ui_dir: Optional[str | Path] = None) -> ServiceApp:
    puzzle = load_puzzle(puzzle_path)
    return ServiceApp(puzzle, mode, config, headless, multi, oracle,
                      snapshot_cadence,
                      Path(ui_dir) if ui_dir else _default_ui_dir(),
                      Path(puzzle_path) / "pieces")


def _default_ui_dir() -> Optional[Path]:
    for candidate in (Path(__file__).resolve().parents[2] / "frontend" / "dist",
                      Path.cwd() / "frontend" / "dist"):
        if candidate.is_dir():
            return candidate
    return None


def serve(puzzle_path: str | Path, mode: str = MODE_IA,
          config: Optional[SessionConfig] = None, port: int = DEFAULT_PORT,
          host: str = "127.0.0.1", headless: bool = False, multi: bool = False,
          oracle: Optional[OracleConfig] = None,
          snapshot_cadence: int = SNAPSHOT_CADENCE,
          ui_dir: Optional[str | Path] = None):
    """Blocking entry point used by the CLI."""
    import uvicorn

    service = build_app(puzzle_path, mode, config, headless, multi, oracle,
                        snapshot_cadence, ui_dir)
    uvicorn.run(service.app, host=host, port=port, log_level="warning")
