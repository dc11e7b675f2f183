/**
 * CLI wrapper for the scripted client:
 *
 *   node dist/headless.js http://127.0.0.1:7341 [ia|cir]
 *
 * Prints the canonical assembly JSON on stdout (and the eval summary on
 * stderr), exit 0 on a completed session. The service must be running with
 * --headless so verification suggestions arrive over the wire.
 */

import { runScriptedSession, waitForService } from "./scripted.js";

async function main() {
  const base = process.argv[2] ?? "http://127.0.0.1:7341";
  const mode = process.argv[3] as "ia" | "cir" | undefined;
  await waitForService(base, 15_000);
  const result = await runScriptedSession(base, { mode });
  if (result.report.eval) {
    process.stderr.write(
      `session ${result.session}: seed ${result.seed}, rounds ${result.rounds}, ` +
      `q_pos ${result.report.eval.q_pos}, rmse_px ${result.report.eval.rmse_px}\n`,
    );
  }
  process.stdout.write(result.assemblyJson + "\n");
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : err);
  process.exit(1);
});
