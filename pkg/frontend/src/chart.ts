/**
 * Progress chart: accuracy and net trust score per timestep.
 *
 * Values are plotted exactly as the server reports them; the only math
 * here is mapping data space onto the canvas viewport.
 */

import type { MetricsRow } from "./api.js";

export interface Viewport {
  width: number;
  height: number;
  padding: number;
}

export interface Point {
  x: number;
  y: number;
}

export interface Series {
  label: string;
  values: number[]; // data space, untouched server values
  points: Point[];  // pixel space
}

export function scaleSeries(rows: MetricsRow[], view: Viewport): { accuracy: Series; trust: Series } {
  const accuracy = rows.map((r) => r.accuracy);
  const trust = rows.map((r) => r.net_trust_score);
  const all = accuracy.concat(trust);
  const lo = all.length ? Math.min(...all) : 0;
  const hi = all.length ? Math.max(...all) : 1;
  const span = hi - lo || 1;

  const inner = {
    w: view.width - 2 * view.padding,
    h: view.height - 2 * view.padding,
  };
  const toPoint = (value: number, index: number): Point => ({
    x: view.padding + (rows.length > 1 ? (index / (rows.length - 1)) * inner.w : inner.w / 2),
    y: view.padding + (1 - (value - lo) / span) * inner.h,
  });

  return {
    accuracy: { label: "accuracy", values: accuracy, points: accuracy.map(toPoint) },
    trust: { label: "net trust score", values: trust, points: trust.map(toPoint) },
  };
}

export function renderChart(canvas: HTMLCanvasElement, rows: MetricsRow[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const view: Viewport = { width: canvas.width, height: canvas.height, padding: 24 };
  ctx.clearRect(0, 0, view.width, view.height);
  ctx.fillStyle = "#777";
  ctx.font = "11px sans-serif";
  if (!rows.length) {
    ctx.fillText("no iterations yet", view.padding, view.height / 2);
    return;
  }
  const { accuracy, trust } = scaleSeries(rows, view);
  drawLine(ctx, accuracy.points, "#2b7de9");
  drawLine(ctx, trust.points, "#d9822b");
  const last = rows[rows.length - 1];
  ctx.fillStyle = "#2b7de9";
  ctx.fillText(`accuracy ${last.accuracy.toFixed(4)}`, view.padding, 12);
  ctx.fillStyle = "#d9822b";
  ctx.fillText(`net trust ${last.net_trust_score.toFixed(4)}`, view.padding + 130, 12);
}

function drawLine(ctx: CanvasRenderingContext2D, points: Point[], color: string): void {
  if (!points.length) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  points.forEach((p, i) => (i ? ctx.lineTo(p.x, p.y) : ctx.moveTo(p.x, p.y)));
  ctx.stroke();
  ctx.fillStyle = color;
  for (const p of points) {
    ctx.fillRect(p.x - 1.5, p.y - 1.5, 3, 3);
  }
}
