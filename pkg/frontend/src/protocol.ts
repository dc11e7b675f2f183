/**
 * Wire protocol for the session service.
 *
 * Every message is a versioned envelope `{v, type, session, seq, payload}`.
 * Server sequence numbers increase monotonically per session; anything at or
 * below the last seen seq is stale and must be ignored. Client commands carry
 * their own counter, also strictly increasing.
 *
 * The schemas here are deliberately strict mirrors of the server validator:
 * an envelope the server would refuse never leaves this module, and a server
 * frame this module refuses is a protocol break worth a visible banner.
 */

import { z } from "zod";

export const WIRE_VERSION = 1;

export class ProtocolError extends Error {
  echo: unknown;
  constructor(message: string, echo?: unknown) {
    super(message);
    this.name = "ProtocolError";
    this.echo = echo;
  }
}

// -- shared shapes -----------------------------------------------------------

/** Pose on the wire: [x, y, theta index] with integer entries. */
export const poseWire = z.tuple([z.int(), z.int(), z.int()]);
export type PoseWire = z.infer<typeof poseWire>;

export interface Pose {
  x: number;
  y: number;
  /** index into the session's rotation table, not degrees */
  theta: number;
}

export const toPose = ([x, y, theta]: PoseWire): Pose => ({ x, y, theta });
export const fromPose = (p: Pose): PoseWire => [p.x, p.y, p.theta];

export const verdictWire = z.object({
  player: z.int(),
  action: z.enum(["lock", "move_and_lock", "reject"]),
  pose: poseWire.nullable().optional(),
});
export type VerdictWire = z.infer<typeof verdictWire>;

// -- server -> client payloads ----------------------------------------------

export const seedOptionsPayload = z.object({
  alpha: z.number(),
  options: z.array(
    z.object({
      fragment_id: z.int(),
      p: z.number(),
      c: z.number(),
      s: z.number(),
      proposed: z.boolean(),
    }),
  ),
});

export const sessionStartedPayload = z.object({
  mode: z.enum(["ia", "cir"]),
  seed: z.int(),
  board: z.object({
    cols: z.int().positive(),
    rows: z.int().positive(),
    cell_size_px: z.int().positive(),
  }),
  rotations: z.array(z.number()).nonempty(),
  fragments: z.array(z.int()),
  snapshot_cadence: z.int().positive(),
});

export const snapshotPayload = z.object({
  round: z.int(),
  status: z.string(),
  iteration: z.int().nullable(),
  mode: z.string(),
  fragments: z.array(
    z.object({
      id: z.int(),
      pose: poseWire,
      confidence: z.number(),
      locked: z.boolean(),
      last_event: z.string().nullable(),
    }),
  ),
});

export const candidatesPayload = z.object({
  round: z.int(),
  candidates: z.array(
    z.object({
      fragment_id: z.int(),
      suitability: z.number(),
      proposal: poseWire,
    }),
  ),
  oracle_verdicts: z.array(verdictWire).optional(),
});

export const pausePayload = z.object({
  iteration: z.int().nullable(),
  converged: z.boolean().optional(),
  oracle_verdicts: z.array(verdictWire).optional(),
});

export const resumePayload = z.object({ iteration: z.int().nullable() });

export const reportPayload = z.object({
  round: z.int(),
  assembly: z.record(z.string(), poseWire),
  events: z.int(),
  eval: z.object({ q_pos: z.number(), rmse_px: z.number() }).optional(),
});

export const errorPayload = z.object({
  message: z.string(),
  echo: z.unknown().optional(),
});

const serverPayloads = {
  seed_options: seedOptionsPayload,
  session_started: sessionStartedPayload,
  snapshot: snapshotPayload,
  candidates: candidatesPayload,
  pause: pausePayload,
  resume: resumePayload,
  report: reportPayload,
  error: errorPayload,
} as const;

export type ServerType = keyof typeof serverPayloads;

export type ServerMessage = {
  [T in ServerType]: {
    type: T;
    session: string | null;
    seq: number;
    payload: z.infer<(typeof serverPayloads)[T]>;
  };
}[ServerType];

export type SeedOptions = z.infer<typeof seedOptionsPayload>;
export type SessionStarted = z.infer<typeof sessionStartedPayload>;
export type Snapshot = z.infer<typeof snapshotPayload>;
export type Candidates = z.infer<typeof candidatesPayload>;
export type Report = z.infer<typeof reportPayload>;

function checkEnvelope(raw: unknown): {
  type: string;
  session: string | null;
  seq: number;
  payload: unknown;
} {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new ProtocolError("message must be a JSON object", raw);
  }
  const env = raw as Record<string, unknown>;
  if (env["v"] !== WIRE_VERSION) {
    throw new ProtocolError(
      `unsupported protocol version ${JSON.stringify(env["v"])}`, raw);
  }
  const seq = env["seq"];
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 0) {
    throw new ProtocolError("seq must be a nonnegative integer", raw);
  }
  const payload = env["payload"] ?? {};
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new ProtocolError("payload must be an object", raw);
  }
  const session = env["session"];
  return {
    type: String(env["type"]),
    session: typeof session === "string" ? session : null,
    seq,
    payload,
  };
}

/** Validate a decoded server frame; throws ProtocolError on anything off. */
export function parseServerMessage(raw: unknown): ServerMessage {
  const env = checkEnvelope(raw);
  const schema = serverPayloads[env.type as ServerType];
  if (schema === undefined) {
    throw new ProtocolError(`unknown message type ${JSON.stringify(env.type)}`, raw);
  }
  const parsed = schema.safeParse(env.payload);
  if (!parsed.success) {
    throw new ProtocolError(`malformed ${env.type} payload: ${parsed.error.message}`, raw);
  }
  return {
    type: env.type,
    session: env.session,
    seq: env.seq,
    payload: parsed.data,
  } as ServerMessage;
}

// -- client -> server commands ------------------------------------------------

export type ClientCommand =
  | { type: "select_seed"; payload: { fragment_id: number } }
  | { type: "verdicts"; payload: { verdicts: VerdictWire[] } }
  | { type: "lock"; payload: { player: number; pose?: PoseWire } }
  | { type: "move_and_lock"; payload: { player: number; pose: PoseWire } }
  | { type: "reject"; payload: { player: number } }
  | { type: "pause"; payload: Record<string, never> }
  | { type: "resume"; payload: Record<string, never> };

/** Stamps outbound commands with the session id and a strictly increasing seq. */
export class Outbox {
  private seq = 0;
  constructor(private readonly session: string) {}

  envelope(cmd: ClientCommand): {
    v: number;
    type: string;
    session: string;
    seq: number;
    payload: unknown;
  } {
    this.seq += 1;
    return {
      v: WIRE_VERSION,
      type: cmd.type,
      session: this.session,
      seq: this.seq,
      payload: cmd.payload,
    };
  }

  get lastSeq(): number {
    return this.seq;
  }
}

/**
 * Canonical assembly serialization: string fragment ids sorted
 * lexicographically, no whitespace. Byte-identical to the solver's own
 * export, which is what the parity check compares against.
 */
export function canonicalAssembly(assembly: Record<string, PoseWire>): string {
  const keys = Object.keys(assembly).sort();
  const parts = keys.map((k) => {
    const pose = assembly[k]!;
    return `${JSON.stringify(k)}:[${pose[0]},${pose[1]},${pose[2]}]`;
  });
  return `{${parts.join(",")}}`;
}
