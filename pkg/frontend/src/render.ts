// Canvas drawing for the three panels. All decisions about what to draw
// come from ConsoleState and the pure geometry helpers; this file only
// pushes paths and text.

import { ConsoleState, Draft, duFromDrag, isStale, MIN_DRAG_PX } from "./console.js";
import { candidateRays, TelemetryPoint, translationMarkerX } from "./overlay.js";
import type { InstructionRow, StateMsg } from "./protocol.js";
import { Viewport } from "./viewport.js";

const ROAD = "#4a4f58";
const TRAIL = "#2e8bc0";
const DRONE = "#ffd166";
const NAV = "#ef476f";
const ZONE = "rgba(255, 209, 102, 0.12)";
const ZONE_ACTIVE = "rgba(6, 214, 160, 0.22)";
const ARROW = "#06d6a0";
const DRAFT = "#9b5de5";

function arrow(ctx: CanvasRenderingContext2D, x0: number, y0: number,
               x1: number, y1: number, head = 7): void {
  const ang = Math.atan2(y1 - y0, x1 - x0);
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - head * Math.cos(ang - 0.45), y1 - head * Math.sin(ang - 0.45));
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - head * Math.cos(ang + 0.45), y1 - head * Math.sin(ang + 0.45));
  ctx.stroke();
}

function drawInstruction(ctx: CanvasRenderingContext2D, vp: Viewport,
                         row: InstructionRow): void {
  const at = vp.toScreen({ x: row.x, y: row.y });
  ctx.fillStyle = row.active ? ZONE_ACTIVE : ZONE;
  ctx.beginPath();
  ctx.arc(at.x, at.y, row.radius * vp.scale, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = row.active ? ARROW : "#8888aa";
  ctx.lineWidth = row.active ? 2.5 : 1.5;
  ctx.beginPath();
  ctx.arc(at.x, at.y, 4, 0, 2 * Math.PI);
  ctx.stroke();
  // the arrow shows du as a turn relative to straight-up on screen
  const theta = (row.du * Math.PI) / 2;
  arrow(ctx, at.x, at.y,
        at.x + 26 * Math.sin(theta), at.y - 26 * Math.cos(theta));
  ctx.fillStyle = "#c8cdd8";
  ctx.font = "11px system-ui, sans-serif";
  ctx.fillText(`#${row.id} du=${row.du.toFixed(2)}`, at.x + 8, at.y - 8);
}

export function renderMap(ctx: CanvasRenderingContext2D, vp: Viewport,
                          s: ConsoleState, draft: Draft | null,
                          nowMs: number): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  ctx.fillStyle = "#14161c";
  ctx.fillRect(0, 0, vp.width, vp.height);

  if (s.world !== null) {
    for (const [a, b, w] of s.world.edges) {
      const pa = s.world.nodes[String(a)];
      const pb = s.world.nodes[String(b)];
      if (!pa || !pb) continue;
      const sa = vp.toScreen({ x: pa[0], y: pa[1] });
      const sb = vp.toScreen({ x: pb[0], y: pb[1] });
      ctx.strokeStyle = ROAD;
      ctx.lineWidth = Math.max(2, w * vp.scale);
      ctx.lineCap = "round";
      ctx.beginPath();
      ctx.moveTo(sa.x, sa.y);
      ctx.lineTo(sb.x, sb.y);
      ctx.stroke();
    }
  }

  if (s.trail.length > 1) {
    ctx.strokeStyle = TRAIL;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.trail.forEach(([x, y], i) => {
      const p = vp.toScreen({ x, y });
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    });
    ctx.stroke();
  }

  const last = s.last;
  if (last !== null) {
    for (const row of last.instructions) drawInstruction(ctx, vp, row);

    if (last.navigator !== null) {
      const n = vp.toScreen({ x: last.navigator.x, y: last.navigator.y });
      ctx.fillStyle = NAV;
      ctx.beginPath();
      ctx.arc(n.x, n.y, 5, 0, 2 * Math.PI);
      ctx.fill();
    }

    const d = vp.toScreen({ x: last.drone.x, y: last.drone.y });
    const yaw = last.drone.yaw;
    // heading (cos yaw, -sin yaw) in world; screen y is flipped
    const hx = Math.cos(yaw);
    const hy = Math.sin(yaw);
    ctx.fillStyle = DRONE;
    ctx.beginPath();
    ctx.moveTo(d.x + 12 * hx, d.y + 12 * hy);
    ctx.lineTo(d.x - 7 * hx - 6 * hy, d.y - 7 * hy + 6 * hx);
    ctx.lineTo(d.x - 7 * hx + 6 * hy, d.y - 7 * hy - 6 * hx);
    ctx.closePath();
    ctx.fill();
  }

  if (draft !== null && last !== null) {
    const a = vp.toScreen({ x: draft.anchorX, y: draft.anchorY });
    ctx.strokeStyle = DRAFT;
    ctx.setLineDash([5, 4]);
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(a.x, a.y, draft.radius * vp.scale, 0, 2 * Math.PI);
    ctx.stroke();
    const tip = vp.toScreen({
      x: draft.anchorX + draft.dragX,
      y: draft.anchorY + draft.dragY,
    });
    arrow(ctx, a.x, a.y, tip.x, tip.y);
    ctx.setLineDash([]);
    const du = duFromDrag(last.drone.yaw, draft.dragX, draft.dragY);
    ctx.fillStyle = DRAFT;
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText(
      draft.dragScreenPx < MIN_DRAG_PX ? "drag further" : `du=${du.toFixed(2)}`,
      a.x + 10, a.y + 16);
  }

  if (isStale(s, nowMs)) {
    ctx.fillStyle = "rgba(180, 40, 40, 0.85)";
    ctx.fillRect(0, 0, vp.width, 26);
    ctx.fillStyle = "#fff";
    ctx.font = "13px system-ui, sans-serif";
    ctx.fillText(
      s.connection === "open" ? "stale stream (paused?)" : "disconnected",
      10, 17);
  }
}

export function renderCamera(ctx: CanvasRenderingContext2D, w: number, h: number,
                             last: StateMsg | null,
                             frame: CanvasImageSource | null): void {
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#101216";
  ctx.fillRect(0, 0, w, h);
  if (frame !== null) {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(frame, 0, 0, w, h);
  } else {
    ctx.fillStyle = "#555";
    ctx.font = "12px system-ui, sans-serif";
    ctx.fillText("no frame (frame_every=0?)", 10, h / 2);
  }
  if (last === null) return;
  for (const ray of candidateRays(last.candidates, last.chosen, w, h)) {
    ctx.strokeStyle = ray.chosen ? "#06d6a0" : "rgba(255,255,255,0.55)";
    ctx.lineWidth = ray.chosen ? 3 : 1.5;
    ctx.setLineDash(ray.chosen ? [] : [6, 5]);
    ctx.beginPath();
    ctx.moveTo(ray.x0, ray.y0);
    ctx.lineTo(ray.x1, ray.y1);
    ctx.stroke();
  }
  ctx.setLineDash([]);
  if (last.command !== null) {
    const mx = translationMarkerX(last.command.t, w);
    ctx.strokeStyle = "#ffd166";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(mx, 0);
    ctx.lineTo(mx, 10);
    ctx.stroke();
  }
}

export function renderTelemetry(ctx: CanvasRenderingContext2D, w: number,
                                h: number, series: TelemetryPoint[]): void {
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#101216";
  ctx.fillRect(0, 0, w, h);
  if (series.length < 2) return;
  const lanes: [keyof TelemetryPoint, string, number, number][] = [
    ["d", "#06d6a0", -1, 1],
    ["s", "#2e8bc0", 0, 10],
    ["t", "#ffd166", -1, 1],
  ];
  const laneH = h / lanes.length;
  lanes.forEach(([key, color, lo, hi], lane) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    series.forEach((p, i) => {
      const x = (i / (series.length - 1)) * (w - 8) + 4;
      const frac = (Number(p[key]) - lo) / (hi - lo);
      const y = laneH * (lane + 1) - 4 - frac * (laneH - 12);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.font = "10px system-ui, sans-serif";
    ctx.fillText(key, 6, laneH * lane + 12);
  });
}
