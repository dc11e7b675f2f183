/**
 * Canvas renderer for the board view.
 *
 * Draws against the small slice of CanvasRenderingContext2D declared below,
 * so tests can hand in a recording stub. Piece artwork is fetched from the
 * service's /pieces route when available; fragments without art render as
 * labeled tiles. Either way the same visual grammar applies: opacity is the
 * belief confidence, locked pieces get a solid frame, manual corrections a
 * red ring, the current selection a dashed outline.
 */

import { BoardView } from "./board.js";

export interface Ctx2D {
  canvas: { width: number; height: number };
  globalAlpha: number;
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  textAlign: CanvasTextAlign;
  textBaseline: CanvasTextBaseline;
  save(): void;
  restore(): void;
  setTransform(a: number, b: number, c: number, d: number, e: number, f: number): void;
  translate(x: number, y: number): void;
  rotate(rad: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
  drawImage(image: CanvasImageSource, dx: number, dy: number, dw: number, dh: number): void;
}

const PIECE_COLORS = [
  "#4e79a7", "#f28e2b", "#59a14f", "#b6992d", "#76b7b2",
  "#af7aa1", "#ff9da7", "#9c755f", "#86bcb6", "#e15759",
];

export type PieceArt = Map<number, CanvasImageSource>;

export function drawBoard(view: BoardView, ctx: Ctx2D, art?: PieceArt): void {
  const { panX, panY, zoom } = view.viewport;
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.fillStyle = "#1c1e26";
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.setTransform(zoom, 0, 0, zoom, panX, panY);

  drawGrid(view, ctx);
  for (const piece of view.pieces.values()) {
    if (view.activeDrag?.id === piece.id) continue;
    drawPiece(view, ctx, piece.id, art);
  }
  drawDragGhost(view, ctx, art);
}

function drawGrid(view: BoardView, ctx: Ctx2D) {
  const w = view.cols * view.cellSize;
  const h = view.rows * view.cellSize;
  ctx.fillStyle = "#262936";
  ctx.fillRect(0, 0, w, h);
  ctx.strokeStyle = "#343848";
  ctx.lineWidth = 1;
  for (let x = 0; x <= view.cols; x++) {
    ctx.strokeRect(x * view.cellSize, 0, 0, h);
  }
  for (let y = 0; y <= view.rows; y++) {
    ctx.strokeRect(0, y * view.cellSize, w, 0);
  }
}

function drawPiece(view: BoardView, ctx: Ctx2D, id: number, art?: PieceArt) {
  const piece = view.pieces.get(id);
  if (piece === undefined) return;
  const center = view.piecePx(piece.pose);
  const deg = view.rotationDeg(piece.pose);
  const size = view.cellSize * 0.92;

  ctx.save();
  ctx.translate(center.x, center.y);
  ctx.rotate((deg * Math.PI) / 180);
  ctx.globalAlpha = view.opacity(id);

  const image = art?.get(id);
  if (image !== undefined) {
    ctx.drawImage(image, -size / 2, -size / 2, size, size);
  } else {
    ctx.fillStyle = PIECE_COLORS[id % PIECE_COLORS.length]!;
    ctx.fillRect(-size / 2, -size / 2, size, size);
    ctx.globalAlpha = Math.max(view.opacity(id), 0.6); // keep the label legible
    ctx.fillStyle = "#10121a";
    ctx.font = `${Math.round(size / 3)}px sans-serif`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(String(id), 0, 0);
  }

  ctx.globalAlpha = 1;
  if (piece.locked) {
    ctx.strokeStyle = "#e9e9ef";
    ctx.lineWidth = 2.5;
    ctx.setLineDash([]);
    ctx.strokeRect(-size / 2, -size / 2, size, size);
  }
  if (view.corrected(id)) {
    ctx.strokeStyle = "#e15759";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.arc(0, 0, size * 0.62, 0, Math.PI * 2);
    ctx.stroke();
  }
  if (piece.pending !== null) {
    ctx.strokeStyle = "#f7cb4d";
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    ctx.strokeRect(-size / 2 - 3, -size / 2 - 3, size + 6, size + 6);
    ctx.setLineDash([]);
  }
  if (view.selection === id) {
    ctx.strokeStyle = "#8ab4f8";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(-size / 2 - 6, -size / 2 - 6, size + 12, size + 12);
    ctx.setLineDash([]);
  }
  ctx.restore();
}

function drawDragGhost(view: BoardView, ctx: Ctx2D, art?: PieceArt) {
  const drag = view.activeDrag;
  if (drag === null) return;
  const size = view.cellSize * 0.92;
  const snapped = view.snapCell(drag.px, drag.py);

  if (snapped !== null) {
    ctx.strokeStyle = "#8ab4f8";
    ctx.lineWidth = 2;
    ctx.setLineDash([5, 4]);
    ctx.strokeRect(snapped.x * view.cellSize, snapped.y * view.cellSize,
      view.cellSize, view.cellSize);
    ctx.setLineDash([]);
  }

  ctx.save();
  ctx.translate(drag.px, drag.py);
  ctx.rotate((drag.rotationDeg * Math.PI) / 180);
  ctx.globalAlpha = snapped === null ? 0.35 : 0.8;
  const image = art?.get(drag.id);
  if (image !== undefined) {
    ctx.drawImage(image, -size / 2, -size / 2, size, size);
  } else {
    ctx.fillStyle = PIECE_COLORS[drag.id % PIECE_COLORS.length]!;
    ctx.fillRect(-size / 2, -size / 2, size, size);
  }
  ctx.restore();
}
