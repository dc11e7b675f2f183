/**
 * Client-side board state.
 *
 * One BoardView instance is the single source of truth for rendering and
 * pointer handling. Server messages mutate it through applyServer (stale
 * sequence numbers are dropped there); pointer gestures go through the
 * begin/endDrag and clickLock entry points, which enforce the interaction
 * invariants and hand back the wire command to send, if any.
 *
 * Invariants kept here:
 *  - locked pieces never start a drag and never emit commands;
 *  - piece opacity equals belief confidence, locked pieces are opaque;
 *  - optimistic edits remember the displayed pose and roll back when the
 *    service rejects the command; the next snapshot always wins.
 */

import {
  Candidates,
  ClientCommand,
  Pose,
  PoseWire,
  Report,
  SeedOptions,
  ServerMessage,
  SessionStarted,
  Snapshot,
  VerdictWire,
  fromPose,
  toPose,
} from "./protocol.js";

export interface PieceView {
  id: number;
  pose: Pose;
  confidence: number;
  locked: boolean;
  /** last verification kind the server reported ("move_and_lock" draws the correction ring) */
  lastEvent: string | null;
  /** optimistic command in flight: remembers what to restore on rejection */
  pending: { prevPose: Pose; kind: "lock" | "move_and_lock" } | null;
}

export interface Viewport {
  panX: number;
  panY: number;
  zoom: number;
}

export interface DragState {
  id: number;
  /** pose the solver proposed, restored on snap-back or rejection */
  startPose: Pose;
  /** current pointer position in board pixels */
  px: number;
  py: number;
  /** free rotation angle in degrees, snapped only on drop */
  rotationDeg: number;
}

export interface CandidateRow {
  fragmentId: number;
  suitability: number;
  proposal: Pose;
  /** operator's decision for the accept-round batch */
  decision: VerdictWire | null;
}

const MIN_ZOOM = 0.2;
const MAX_ZOOM = 8;

export class BoardView {
  readonly mode: "ia" | "cir";
  readonly cols: number;
  readonly rows: number;
  readonly cellSize: number;
  /** rotation table in degrees; pose.theta indexes into it */
  readonly rotations: number[];
  readonly seed: number;

  pieces = new Map<number, PieceView>();
  round = 0;
  status = "running";
  iteration: number | null = null;
  selection: number | null = null;
  viewport: Viewport = { panX: 0, panY: 0, zoom: 1 };
  candidates: CandidateRow[] = [];
  oracleVerdicts: VerdictWire[] | null = null;
  report: Report | null = null;
  /** protocol break: rendered as a banner, stream halted by the client */
  banner: string | null = null;
  toast: string | null = null;

  private lastServerSeq = 0;
  private drag: DragState | null = null;

  constructor(started: SessionStarted, startSeq = 0) {
    this.mode = started.mode;
    this.cols = started.board.cols;
    this.rows = started.board.rows;
    this.cellSize = started.board.cell_size_px;
    this.rotations = [...started.rotations];
    this.seed = started.seed;
    this.lastServerSeq = startSeq;
    for (const fid of started.fragments) {
      this.pieces.set(fid, {
        id: fid,
        pose: { x: 0, y: 0, theta: 0 },
        confidence: 0,
        locked: false,
        lastEvent: null,
        pending: null,
      });
    }
  }

  // -- server messages --------------------------------------------------------

  /** Returns false when the message was stale (or addressed to nobody). */
  applyServer(msg: ServerMessage): boolean {
    if (msg.seq <= this.lastServerSeq) {
      return false; // out-of-order frame: no visual change
    }
    this.lastServerSeq = msg.seq;
    switch (msg.type) {
      case "snapshot":
        this.applySnapshot(msg.payload);
        break;
      case "candidates":
        this.applyCandidates(msg.payload);
        break;
      case "report":
        this.report = msg.payload;
        this.status = "complete";
        break;
      case "error":
        this.applyError(msg.payload.message, msg.payload.echo);
        break;
      case "pause":
        this.status = msg.payload.converged ? "converged" : "paused";
        this.iteration = msg.payload.iteration;
        this.oracleVerdicts = msg.payload.oracle_verdicts ?? null;
        break;
      case "resume":
        this.status = "running";
        this.iteration = msg.payload.iteration;
        break;
      case "seed_options":
      case "session_started":
        break; // handled before the view exists
    }
    return true;
  }

  private applySnapshot(snap: Snapshot) {
    this.round = snap.round;
    this.status = snap.status;
    this.iteration = snap.iteration;
    for (const frag of snap.fragments) {
      const piece = this.pieces.get(frag.id);
      if (piece === undefined) continue;
      piece.pose = toPose(frag.pose);
      piece.confidence = frag.confidence;
      piece.locked = frag.locked;
      piece.lastEvent = frag.last_event;
      piece.pending = null; // the snapshot is authoritative
    }
  }

  private applyCandidates(cand: Candidates) {
    this.round = cand.round;
    this.candidates = cand.candidates.map((c) => ({
      fragmentId: c.fragment_id,
      suitability: c.suitability,
      proposal: toPose(c.proposal),
      decision: null,
    }));
    this.oracleVerdicts = cand.oracle_verdicts ?? null;
  }

  private applyError(message: string, echo: unknown) {
    this.toast = message;
    const player =
      typeof echo === "object" && echo !== null && !Array.isArray(echo)
        ? (echo as Record<string, unknown>)["player"]
        : undefined;
    if (typeof player !== "number") return;
    const piece = this.pieces.get(player);
    if (piece?.pending) {
      piece.pose = piece.pending.prevPose; // rejected: back where the solver put it
      piece.pending = null;
    }
  }

  // -- rendering helpers --------------------------------------------------------

  /** Opacity is the belief confidence itself; locked pieces are fully opaque. */
  opacity(id: number): number {
    const piece = this.pieces.get(id);
    if (piece === undefined) return 0;
    if (piece.locked) return 1;
    return Math.min(1, Math.max(0, piece.confidence));
  }

  /** Manual corrections get a red ring. */
  corrected(id: number): boolean {
    return this.pieces.get(id)?.lastEvent === "move_and_lock";
  }

  rotationDeg(pose: Pose): number {
    return this.rotations[((pose.theta % this.rotations.length) + this.rotations.length) % this.rotations.length]!;
  }

  piecePx(pose: Pose): { x: number; y: number } {
    return { x: (pose.x + 0.5) * this.cellSize, y: (pose.y + 0.5) * this.cellSize };
  }

  // -- viewport -----------------------------------------------------------------

  panBy(dx: number, dy: number) {
    this.viewport.panX += dx;
    this.viewport.panY += dy;
  }

  zoomAt(factor: number, cx: number, cy: number) {
    const prev = this.viewport.zoom;
    const next = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, prev * factor));
    // keep the point under the cursor fixed
    this.viewport.panX = cx - ((cx - this.viewport.panX) * next) / prev;
    this.viewport.panY = cy - ((cy - this.viewport.panY) * next) / prev;
    this.viewport.zoom = next;
  }

  /** screen -> board pixels */
  toBoard(sx: number, sy: number): { x: number; y: number } {
    return {
      x: (sx - this.viewport.panX) / this.viewport.zoom,
      y: (sy - this.viewport.panY) / this.viewport.zoom,
    };
  }

  // -- pointer interactions -------------------------------------------------------

  /** Locked pieces are immovable: no drag ever starts on one. */
  beginDrag(id: number): DragState | null {
    const piece = this.pieces.get(id);
    if (piece === undefined || piece.locked || this.status === "complete") {
      return null;
    }
    const px = this.piecePx(piece.pose);
    this.drag = {
      id,
      startPose: { ...piece.pose },
      px: px.x,
      py: px.y,
      rotationDeg: this.rotationDeg(piece.pose),
    };
    this.selection = id;
    return this.drag;
  }

  get activeDrag(): DragState | null {
    return this.drag;
  }

  dragTo(px: number, py: number) {
    if (this.drag) {
      this.drag.px = px;
      this.drag.py = py;
    }
  }

  /** Discrete rotation input during a drag (wheel/keyboard), in degrees. */
  dragRotate(deltaDeg: number) {
    if (this.drag) {
      this.drag.rotationDeg = ((this.drag.rotationDeg + deltaDeg) % 360 + 360) % 360;
    }
  }

  /**
   * Drop: snap to the nearest cell and configured rotation. Off-board drops
   * snap back and send nothing; on-board drops show the snapped pose
   * optimistically and emit move_and_lock.
   */
  endDrag(): ClientCommand | null {
    const drag = this.drag;
    if (drag === null) return null;
    this.drag = null;
    const piece = this.pieces.get(drag.id);
    if (piece === undefined || piece.locked) return null;
    const cell = this.snapCell(drag.px, drag.py);
    if (cell === null) {
      piece.pose = drag.startPose; // snap back, no command
      return null;
    }
    const theta = this.snapRotation(drag.rotationDeg);
    const pose: Pose = { x: cell.x, y: cell.y, theta };
    piece.pending = { prevPose: drag.startPose, kind: "move_and_lock" };
    piece.pose = pose;
    return {
      type: "move_and_lock",
      payload: { player: drag.id, pose: fromPose(pose) },
    };
  }

  /** Single-click lock of the currently displayed pose. Locked: no message. */
  clickLock(id: number): ClientCommand | null {
    const piece = this.pieces.get(id);
    if (piece === undefined || piece.locked || this.status === "complete") {
      return null;
    }
    piece.pending = { prevPose: { ...piece.pose }, kind: "lock" };
    return { type: "lock", payload: { player: id, pose: fromPose(piece.pose) } };
  }

  reject(id: number): ClientCommand | null {
    const piece = this.pieces.get(id);
    if (piece === undefined || piece.locked) return null;
    return { type: "reject", payload: { player: id } };
  }

  // -- snapping --------------------------------------------------------------------

  /** Board pixels -> containing cell, or null when outside the board. */
  snapCell(px: number, py: number): { x: number; y: number } | null {
    const x = Math.floor(px / this.cellSize);
    const y = Math.floor(py / this.cellSize);
    if (x < 0 || y < 0 || x >= this.cols || y >= this.rows) return null;
    return { x, y };
  }

  /** Nearest configured rotation by circular distance; ties take the lower index. */
  snapRotation(deg: number): number {
    const norm = ((deg % 360) + 360) % 360;
    let best = 0;
    let bestDist = Infinity;
    for (let i = 0; i < this.rotations.length; i++) {
      const d = Math.abs(norm - (((this.rotations[i]! % 360) + 360) % 360));
      const dist = Math.min(d, 360 - d);
      if (dist < bestDist - 1e-9) {
        bestDist = dist;
        best = i;
      }
    }
    return best;
  }

  // -- round verification batching ---------------------------------------------------

  /** Record the operator's per-candidate decision for the next accept-round. */
  decide(fragmentId: number, verdict: VerdictWire | null) {
    const row = this.candidates.find((c) => c.fragmentId === fragmentId);
    if (row === undefined) throw new Error(`fragment ${fragmentId} is not a candidate`);
    row.decision = verdict;
  }

  /** All recorded decisions as one verdicts command (the accept-round batch). */
  acceptRound(): ClientCommand | null {
    const verdicts = this.candidates
      .map((c) => c.decision)
      .filter((d): d is VerdictWire => d !== null);
    if (verdicts.length === 0) return null;
    return { type: "verdicts", payload: { verdicts } };
  }

  /** Adopt the scripted-user suggestions the headless service attaches. */
  adoptOracle(): ClientCommand | null {
    if (this.oracleVerdicts === null || this.oracleVerdicts.length === 0) return null;
    return { type: "verdicts", payload: { verdicts: this.oracleVerdicts } };
  }
}

/** Seed choice UI: options arrive ranked, entries carry the score breakdown. */
export function bestSeed(options: SeedOptions): number {
  if (options.options.length === 0) throw new Error("no proposed seeds");
  let best = options.options[0]!;
  for (const entry of options.options) {
    if (entry.s > best.s) best = entry;
  }
  return best.fragment_id;
}

export function poseKey(pose: PoseWire): string {
  return pose.join(",");
}
