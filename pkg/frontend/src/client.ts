/**
 * Session client: one WebSocket, one BoardView.
 *
 * The transport is abstracted to the three members both the browser
 * WebSocket and the node `ws` client share, so the same client drives the
 * canvas UI and the headless scripted runs. Inbound frames are validated,
 * sequence-filtered and folded into the view; a protocol break (bad version,
 * malformed frame) raises the banner and halts the stream, as divergent
 * client state is worse than a frozen one.
 */

import { BoardView, bestSeed } from "./board.js";
import {
  ClientCommand,
  Outbox,
  ProtocolError,
  SeedOptions,
  ServerMessage,
  SessionStarted,
  parseServerMessage,
} from "./protocol.js";

export interface WireSocket {
  send(data: string): void;
  close(): void;
}

export interface ClientEvents {
  seedOptions?: (options: SeedOptions) => void;
  started?: (view: BoardView) => void;
  /** fires after any message changed the view */
  changed?: (view: BoardView, msg: ServerMessage) => void;
  report?: (view: BoardView) => void;
  error?: (message: string, echo: unknown) => void;
  halted?: (reason: string) => void;
}

export class SessionClient {
  view: BoardView | null = null;
  seedOptions: SeedOptions | null = null;
  halted: string | null = null;

  private readonly outbox: Outbox;
  private startedSeq = 0;

  constructor(
    private readonly socket: WireSocket,
    readonly sessionId: string,
    private readonly events: ClientEvents = {},
  ) {
    this.outbox = new Outbox(sessionId);
  }

  /** Feed one decoded inbound frame (call from the socket's message handler). */
  receive(raw: unknown): void {
    if (this.halted !== null) return; // banner is up: ignore the stream
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.halt(err.message);
        return;
      }
      throw err;
    }
    if (msg.type === "seed_options") {
      this.seedOptions = msg.payload;
      this.startedSeq = Math.max(this.startedSeq, msg.seq);
      this.events.seedOptions?.(msg.payload);
      return;
    }
    if (msg.type === "session_started") {
      this.view = new BoardView(msg.payload as SessionStarted, msg.seq);
      this.events.started?.(this.view);
      return;
    }
    if (this.view === null) return; // stray frame before session start
    const changed = this.view.applyServer(msg);
    if (!changed) return; // stale seq: no visual change
    if (msg.type === "error") {
      this.events.error?.(msg.payload.message, msg.payload.echo);
    }
    this.events.changed?.(this.view, msg);
    if (msg.type === "report") {
      this.events.report?.(this.view);
    }
  }

  private halt(reason: string) {
    this.halted = reason;
    if (this.view) this.view.banner = reason;
    this.events.halted?.(reason);
  }

  // -- outbound ---------------------------------------------------------------

  send(cmd: ClientCommand | null): boolean {
    if (cmd === null || this.halted !== null) return false;
    this.socket.send(JSON.stringify(this.outbox.envelope(cmd)));
    return true;
  }

  selectSeed(fragmentId?: number): boolean {
    const fid =
      fragmentId ??
      (this.seedOptions !== null ? bestSeed(this.seedOptions) : undefined);
    if (fid === undefined) return false;
    return this.send({ type: "select_seed", payload: { fragment_id: fid } });
  }

  pause(): boolean {
    return this.send({ type: "pause", payload: {} });
  }

  resume(): boolean {
    return this.send({ type: "resume", payload: {} });
  }

  close(): void {
    this.socket.close();
  }

  get lastClientSeq(): number {
    return this.outbox.lastSeq;
  }
}

/** REST bootstrap: create a session and return its id plus the seed ranking. */
export async function createSession(
  baseUrl: string,
  mode?: "ia" | "cir",
): Promise<{ session: string; mode: string; seedOptions: SeedOptions }> {
  const res = await fetch(`${baseUrl}/session`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(mode ? { mode } : {}),
  });
  if (!res.ok) {
    const body = await res.text();
    throw new Error(`session create failed (${res.status}): ${body}`);
  }
  const doc = (await res.json()) as {
    session: string;
    mode: string;
    seed_options: SeedOptions;
  };
  return { session: doc.session, mode: doc.mode, seedOptions: doc.seed_options };
}
