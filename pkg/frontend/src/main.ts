/**
 * Browser entry point.
 *
 * Layout: a canvas board (pan with the right button or empty space, zoom
 * with the wheel, drag pieces with the left button, rotate the held piece
 * with the wheel, click to lock), a side panel with the seed picker, the
 * round's candidates and session controls, and a status strip. All state
 * lives in BoardView + SessionClient; this file only wires DOM events.
 */

import { BoardView, bestSeed } from "./board.js";
import { drawBoard, PieceArt, Ctx2D } from "./canvas.js";
import { SessionClient, createSession } from "./client.js";
import { SeedOptions } from "./protocol.js";

const ROTATE_STEP_FALLBACK = 90;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

async function loadArt(view: BoardView): Promise<PieceArt> {
  const art: PieceArt = new Map();
  await Promise.all(
    [...view.pieces.keys()].map(async (fid) => {
      try {
        const res = await fetch(`/pieces/${fid}.png`);
        if (!res.ok) return;
        const bitmap = await createImageBitmap(await res.blob());
        art.set(fid, bitmap);
      } catch {
        /* no artwork: labeled tiles render instead */
      }
    }),
  );
  return art;
}

function renderSeedPicker(
  options: SeedOptions,
  onPick: (fragmentId: number) => void,
) {
  const panel = el<HTMLDivElement>("seed-panel");
  panel.innerHTML = "";
  const title = document.createElement("h2");
  title.textContent = `Pick a seed (alpha=${options.alpha.toFixed(2)})`;
  panel.appendChild(title);
  const recommended = bestSeed(options);
  for (const entry of options.options) {
    const row = document.createElement("button");
    row.className = "seed-row";
    row.textContent =
      `fragment ${entry.fragment_id}  S=${entry.s.toFixed(3)} ` +
      `(P=${entry.p.toFixed(3)}, C=${entry.c.toFixed(3)})` +
      (entry.fragment_id === recommended ? "  ★" : "");
    row.addEventListener("click", () => onPick(entry.fragment_id));
    panel.appendChild(row);
  }
  panel.hidden = false;
}

function renderCandidates(view: BoardView, client: SessionClient) {
  const panel = el<HTMLDivElement>("candidates-panel");
  panel.innerHTML = "";
  if (view.candidates.length === 0) {
    panel.hidden = true;
    return;
  }
  const title = document.createElement("h2");
  title.textContent = `Round ${view.round} candidates`;
  panel.appendChild(title);
  for (const row of view.candidates) {
    const div = document.createElement("div");
    div.className = "cand-row";
    const label = document.createElement("span");
    label.textContent =
      `#${row.fragmentId} @ (${row.proposal.x},${row.proposal.y},` +
      `${view.rotationDeg(row.proposal)}°) N=${row.suitability.toFixed(3)}`;
    div.appendChild(label);
    const accept = document.createElement("button");
    accept.textContent = "lock";
    accept.addEventListener("click", () => {
      view.decide(row.fragmentId, {
        player: row.fragmentId,
        action: "lock",
        pose: [row.proposal.x, row.proposal.y, row.proposal.theta],
      });
      accept.disabled = true;
    });
    const rej = document.createElement("button");
    rej.textContent = "reject";
    rej.addEventListener("click", () => {
      view.decide(row.fragmentId, { player: row.fragmentId, action: "reject" });
      rej.disabled = true;
    });
    div.appendChild(accept);
    div.appendChild(rej);
    panel.appendChild(div);
  }
  const send = document.createElement("button");
  send.id = "accept-round";
  send.textContent = "apply verdicts";
  send.addEventListener("click", () => client.send(view.acceptRound()));
  panel.appendChild(send);
  if (view.oracleVerdicts !== null) {
    const oracle = document.createElement("button");
    oracle.textContent = "apply scripted suggestions";
    oracle.addEventListener("click", () => client.send(view.adoptOracle()));
    panel.appendChild(oracle);
  }
  panel.hidden = false;
}

function renderStatus(view: BoardView | null) {
  const strip = el<HTMLDivElement>("status");
  if (view === null) {
    strip.textContent = "connecting…";
    return;
  }
  const parts = [
    `mode ${view.mode}`,
    `status ${view.status}`,
    `round ${view.round}`,
    view.iteration !== null ? `iteration ${view.iteration}` : "",
    `locked ${[...view.pieces.values()].filter((p) => p.locked).length}/${view.pieces.size}`,
  ];
  if (view.report?.eval) {
    parts.push(
      `q_pos ${view.report.eval.q_pos.toFixed(3)}`,
      `rmse ${view.report.eval.rmse_px.toFixed(2)}px`,
    );
  }
  strip.textContent = parts.filter(Boolean).join("  ·  ");
  el<HTMLDivElement>("banner").hidden = view.banner === null;
  if (view.banner !== null) {
    el<HTMLDivElement>("banner").textContent = view.banner;
  }
  const toast = el<HTMLDivElement>("toast");
  if (view.toast !== null) {
    toast.textContent = view.toast;
    toast.hidden = false;
    view.toast = null;
    setTimeout(() => (toast.hidden = true), 4000);
  }
}

async function boot() {
  const canvas = el<HTMLCanvasElement>("board");
  const ctx = canvas.getContext("2d") as unknown as Ctx2D;
  let view: BoardView | null = null;
  let art: PieceArt | undefined;
  let needsRedraw = true;
  const redraw = () => {
    needsRedraw = true;
  };

  function frame() {
    if (needsRedraw && view !== null) {
      needsRedraw = false;
      drawBoard(view, ctx, art);
    }
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);

  const { session } = await createSession(window.location.origin);
  const ws = new WebSocket(
    window.location.origin.replace(/^http/, "ws") + `/session/${session}/ws`,
  );
  const client: SessionClient = new SessionClient(
    { send: (d) => ws.send(d), close: () => ws.close() },
    session,
    {
      seedOptions: (options) =>
        renderSeedPicker(options, (fid) => {
          client.selectSeed(fid);
          el<HTMLDivElement>("seed-panel").hidden = true;
        }),
      started: async (v) => {
        view = v;
        const fit = Math.min(
          canvas.width / (v.cols * v.cellSize),
          canvas.height / (v.rows * v.cellSize),
        );
        v.viewport.zoom = fit * 0.9;
        v.viewport.panX = (canvas.width - v.cols * v.cellSize * v.viewport.zoom) / 2;
        v.viewport.panY = (canvas.height - v.rows * v.cellSize * v.viewport.zoom) / 2;
        art = await loadArt(v);
        renderStatus(view);
        redraw();
      },
      changed: (v, msg) => {
        if (msg.type === "candidates") renderCandidates(v, client);
        if (msg.type === "report") el<HTMLDivElement>("candidates-panel").hidden = true;
        renderStatus(v);
        redraw();
      },
      halted: () => renderStatus(view),
    },
  );
  ws.addEventListener("message", (ev) => client.receive(JSON.parse(ev.data)));
  ws.addEventListener("close", () => renderStatus(view));
  renderStatus(null);

  el<HTMLButtonElement>("pause").addEventListener("click", () => client.pause());
  el<HTMLButtonElement>("resume").addEventListener("click", () => client.resume());

  // -- pointer wiring ---------------------------------------------------------

  let panning: { sx: number; sy: number } | null = null;

  function pieceAt(bx: number, by: number): number | null {
    if (view === null) return null;
    const cell = view.snapCell(bx, by);
    if (cell === null) return null;
    for (const piece of view.pieces.values()) {
      if (piece.pose.x === cell.x && piece.pose.y === cell.y) return piece.id;
    }
    return null;
  }

  canvas.addEventListener("pointerdown", (ev) => {
    if (view === null) return;
    canvas.setPointerCapture(ev.pointerId);
    const b = view.toBoard(ev.offsetX, ev.offsetY);
    const hit = ev.button === 0 ? pieceAt(b.x, b.y) : null;
    if (hit !== null && view.beginDrag(hit) !== null) {
      redraw();
      return; // drag started (locked pieces fall through to panning)
    }
    panning = { sx: ev.offsetX - view.viewport.panX, sy: ev.offsetY - view.viewport.panY };
  });

  canvas.addEventListener("pointermove", (ev) => {
    if (view === null) return;
    if (view.activeDrag !== null) {
      const b = view.toBoard(ev.offsetX, ev.offsetY);
      view.dragTo(b.x, b.y);
      redraw();
    } else if (panning !== null) {
      view.viewport.panX = ev.offsetX - panning.sx;
      view.viewport.panY = ev.offsetY - panning.sy;
      redraw();
    }
  });

  canvas.addEventListener("pointerup", (ev) => {
    if (view === null) return;
    panning = null;
    const drag = view.activeDrag;
    if (drag === null) return;
    const b = view.toBoard(ev.offsetX, ev.offsetY);
    const moved =
      Math.hypot(b.x - (drag.startPose.x + 0.5) * view.cellSize,
        b.y - (drag.startPose.y + 0.5) * view.cellSize) > view.cellSize / 4;
    if (moved) {
      client.send(view.endDrag());
    } else {
      view.endDrag(); // tiny wiggle: treat as a click
      client.send(view.clickLock(drag.id));
    }
    redraw();
  });

  canvas.addEventListener("wheel", (ev) => {
    if (view === null) return;
    ev.preventDefault();
    if (view.activeDrag !== null) {
      const steps = view.rotations.length > 1
        ? Math.abs((view.rotations[1]! - view.rotations[0]!))
        : ROTATE_STEP_FALLBACK;
      view.dragRotate(ev.deltaY > 0 ? steps : -steps);
    } else {
      view.zoomAt(ev.deltaY > 0 ? 0.9 : 1.1, ev.offsetX, ev.offsetY);
    }
    redraw();
  }, { passive: false });

  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
}

boot().catch((err) => {
  const banner = document.getElementById("banner");
  if (banner !== null) {
    banner.hidden = false;
    banner.textContent = `startup failed: ${err}`;
  }
});
