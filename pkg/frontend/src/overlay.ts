// Geometry for the camera-frame overlay and the telemetry chart,
// separated from canvas work so it can be checked numerically.

import type { Candidate, Command, StateMsg } from "./protocol.js";

const HALF_PI = Math.PI / 2;

export interface Ray {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  chosen: boolean;
}

// Candidate directions fan out from the bottom-center of the frame;
// dir 0 points straight up (forward), +1 lies a quarter turn right.
export function candidateRays(
  candidates: Candidate[],
  chosen: number | null,
  width: number,
  height: number,
  lengthPx?: number,
): Ray[] {
  const x0 = width / 2;
  const y0 = height - 1;
  const len = lengthPx ?? 0.92 * height;
  return candidates.map((c, i) => {
    const theta = c.dir * HALF_PI;
    return {
      x0,
      y0,
      x1: x0 + len * Math.sin(theta),
      y1: y0 - len * Math.cos(theta),
      chosen: chosen !== null && i === chosen,
    };
  });
}

// The translation head predicts where the road crosses the frame's
// leading edge, normalized to [-1, 1]; in pixels that is (1+t)/2*width.
export function translationMarkerX(t: number, width: number): number {
  return ((1 + t) / 2) * width;
}

export interface TelemetryPoint {
  tick: number;
  d: number;
  s: number;
  t: number;
}

export function telemetryPoint(msg: StateMsg): TelemetryPoint | null {
  const c: Command | null = msg.command;
  if (c === null) return null;
  return { tick: msg.tick, d: c.d, s: c.s, t: c.t };
}

export function pushTelemetry(
  series: TelemetryPoint[], point: TelemetryPoint | null, cap = 300,
): TelemetryPoint[] {
  if (point === null) return series;
  const out = series.concat([point]);
  if (out.length > cap) out.splice(0, out.length - cap);
  return out;
}
