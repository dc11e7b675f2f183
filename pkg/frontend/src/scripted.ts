/**
 * Headless scripted session for CI and parity checks.
 *
 * Drives a full interactive session over the real wire: create via REST,
 * pick the top-ranked seed, then echo back the scripted-user suggestions the
 * service attaches in --headless mode (candidates in IA, pause frames in
 * CIR) until the report arrives. No solver logic lives here; the client
 * only speaks the protocol.
 */

import WebSocket from "ws";

import { bestSeed } from "./board.js";
import { SessionClient, WireSocket, createSession } from "./client.js";
import { Report, canonicalAssembly } from "./protocol.js";

export interface ScriptedResult {
  session: string;
  seed: number;
  rounds: number;
  report: Report;
  /** canonical serialization for byte-identity checks */
  assemblyJson: string;
}

export function runScriptedSession(
  baseUrl: string,
  opts: { mode?: "ia" | "cir"; timeoutMs?: number } = {},
): Promise<ScriptedResult> {
  const timeoutMs = opts.timeoutMs ?? 120_000;
  return new Promise((resolve, reject) => {
    let settled = false;
    const fail = (err: Error) => {
      if (!settled) {
        settled = true;
        clearTimeout(timer);
        try {
          ws?.close();
        } catch {
          /* already closed */
        }
        reject(err);
      }
    };
    const timer = setTimeout(
      () => fail(new Error(`scripted session timed out after ${timeoutMs}ms`)),
      timeoutMs,
    );

    let ws: WebSocket | null = null;
    createSession(baseUrl, opts.mode)
      .then(({ session }) => {
        const wsUrl = baseUrl.replace(/^http/, "ws") + `/session/${session}/ws`;
        ws = new WebSocket(wsUrl);
        const socket: WireSocket = {
          send: (data) => ws!.send(data),
          close: () => ws!.close(),
        };
        let seedSent = false;
        let seed = -1;
        const client = new SessionClient(socket, session, {
          seedOptions: (options) => {
            if (!seedSent) {
              seedSent = true;
              seed = bestSeed(options);
              client.selectSeed(seed);
            }
          },
          changed: (view, msg) => {
            if (msg.type === "candidates" || msg.type === "pause") {
              const cmd = view.adoptOracle();
              if (cmd !== null) {
                client.send(cmd);
              } else if (msg.type === "pause" && msg.payload.converged === false) {
                client.resume(); // nothing to verify yet, keep solving
              }
            }
          },
          report: (view) => {
            if (settled) return;
            settled = true;
            clearTimeout(timer);
            const report = view.report!;
            ws!.close();
            resolve({
              session,
              seed,
              rounds: report.round,
              report,
              assemblyJson: canonicalAssembly(report.assembly),
            });
          },
          error: (message) => {
            // service-side rejections are fatal for a scripted run
            fail(new Error(`service error: ${message}`));
          },
          halted: (reason) => fail(new Error(`protocol halt: ${reason}`)),
        });
        ws.on("message", (data) => {
          try {
            client.receive(JSON.parse(data.toString()));
          } catch (err) {
            fail(err instanceof Error ? err : new Error(String(err)));
          }
        });
        ws.on("error", (err) => fail(err));
        ws.on("close", () => {
          if (!settled) fail(new Error("socket closed before report"));
        });
      })
      .catch(fail);
  });
}

/** Poll /healthz until the service answers or the deadline passes. */
export async function waitForService(
  baseUrl: string,
  timeoutMs = 30_000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastErr: unknown = null;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${baseUrl}/healthz`);
      if (res.ok) return;
    } catch (err) {
      lastErr = err;
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service at ${baseUrl} never came up: ${lastErr}`);
}
