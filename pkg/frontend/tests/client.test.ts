import { describe, expect, it } from "vitest";

import { SessionClient, WireSocket } from "../src/client.js";
import { ServerMessage } from "../src/protocol.js";

class FakeSocket implements WireSocket {
  sent: Array<Record<string, unknown>> = [];
  closed = false;
  send(data: string) {
    this.sent.push(JSON.parse(data));
  }
  close() {
    this.closed = true;
  }
}

const OPTIONS = {
  alpha: 0.5,
  options: [
    { fragment_id: 3, p: 0.2, c: 0.5, s: 0.35, proposed: true },
    { fragment_id: 0, p: 1.0, c: 0.4, s: 0.7, proposed: true },
  ],
};

const STARTED = {
  mode: "ia",
  seed: 0,
  board: { cols: 12, rows: 10, cell_size_px: 40 },
  rotations: [0, 90, 180, 270],
  fragments: [0, 1],
  snapshot_cadence: 10,
};

function frames(client: SessionClient, ...messages: Array<[string, number, unknown]>) {
  for (const [type, seq, payload] of messages) {
    client.receive({ v: 1, type, session: "s1", seq, payload });
  }
}

function snapshotPayload(pose: [number, number, number], confidence: number) {
  return {
    round: 0,
    status: "running",
    iteration: 10,
    mode: "ia",
    fragments: [
      { id: 0, pose: [6, 5, 0], confidence: 1, locked: true, last_event: null },
      { id: 1, pose, confidence, locked: false, last_event: null },
    ],
  };
}

describe("SessionClient", () => {
  it("selects the top-ranked seed and stamps increasing client seqs", () => {
    const socket = new FakeSocket();
    const client = new SessionClient(socket, "s1");
    frames(client, ["seed_options", 1, OPTIONS]);
    expect(client.selectSeed()).toBe(true);
    expect(client.pause()).toBe(true);
    expect(socket.sent.map((m) => m["seq"])).toEqual([1, 2]);
    expect(socket.sent[0]).toMatchObject({
      v: 1,
      type: "select_seed",
      session: "s1",
      payload: { fragment_id: 0 }, // s=0.7 beats s=0.35
    });
  });

  it("ignores out-of-order frames after building the view", () => {
    const client = new SessionClient(new FakeSocket(), "s1");
    const seen: ServerMessage[] = [];
    const withEvents = new SessionClient(new FakeSocket(), "s1", {
      changed: (_view, msg) => seen.push(msg),
    });
    frames(withEvents,
      ["session_started", 2, STARTED],
      ["snapshot", 7, snapshotPayload([8, 6, 2], 0.9)],
      ["snapshot", 5, snapshotPayload([0, 0, 0], 0.1)], // stale: dropped
    );
    expect(seen).toHaveLength(1);
    expect(withEvents.view!.pieces.get(1)!.pose).toEqual({ x: 8, y: 6, theta: 2 });
    expect(client.view).toBeNull();
  });

  it("halts the stream on a protocol version break", () => {
    const socket = new FakeSocket();
    let halted: string | null = null;
    const client = new SessionClient(socket, "s1", { halted: (r) => (halted = r) });
    frames(client, ["session_started", 1, STARTED]);
    client.receive({ v: 2, type: "snapshot", session: "s1", seq: 2, payload: {} });
    expect(halted).toMatch(/unsupported protocol version/);
    expect(client.view!.banner).toMatch(/unsupported protocol version/);
    // later well-formed frames are ignored: the stream is dead
    frames(client, ["snapshot", 3, snapshotPayload([1, 1, 0], 0.5)]);
    expect(client.view!.pieces.get(1)!.pose).toEqual({ x: 0, y: 0, theta: 0 });
    // and outbound commands are refused
    expect(client.pause()).toBe(false);
    expect(socket.sent).toHaveLength(0);
  });

  it("routes service errors to the rollback path and the error event", () => {
    const client = new SessionClient(new FakeSocket(), "s1");
    const errors: string[] = [];
    const view = new SessionClient(new FakeSocket(), "s1", {
      error: (m) => errors.push(m),
    });
    frames(view,
      ["session_started", 1, STARTED],
      ["snapshot", 2, snapshotPayload([7, 5, 0], 0.4)],
    );
    const cmd = view.view!.clickLock(1);
    expect(cmd).not.toBeNull();
    frames(view, ["error", 3, { message: "relock refused", echo: { player: 1 } }]);
    expect(errors).toEqual(["relock refused"]);
    expect(view.view!.pieces.get(1)!.pending).toBeNull();
    expect(client.view).toBeNull();
  });

  it("fires the report event once the session completes", () => {
    let done = false;
    const client = new SessionClient(new FakeSocket(), "s1", {
      report: () => (done = true),
    });
    frames(client,
      ["session_started", 1, STARTED],
      ["report", 2, { round: 3, assembly: { "0": [6, 5, 0], "1": [7, 5, 0] }, events: 12 }],
    );
    expect(done).toBe(true);
    expect(client.view!.status).toBe("complete");
    expect(client.view!.report!.assembly["1"]).toEqual([7, 5, 0]);
  });
});
