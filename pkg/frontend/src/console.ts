// Console session state and its reducers. Everything here is pure:
// replaying the same message sequence yields the same state, which is
// what keeps the rendered screens a function of the recorded protocol
// traffic alone.

import type { ServerMessage, StateMsg, WorldMsg } from "./protocol.js";

export const STALE_AFTER_MS = 2000;
export const MIN_DRAG_PX = 12;
export const TRAIL_CAP = 600;

const HALF_PI = Math.PI / 2;
const DU_LIMIT = 0.999999; // instruction direction must stay inside (-1, 1)

export type Connection = "connecting" | "open" | "closed";

export interface Draft {
  // anchor and drag vector in world meters; screen length gates commit
  anchorX: number;
  anchorY: number;
  dragX: number;
  dragY: number;
  dragScreenPx: number;
  radius: number;
}

export interface ConsoleState {
  connection: Connection;
  world: WorldMsg | null;
  last: StateMsg | null;
  lastStateAtMs: number | null;
  trail: [number, number][];
  trailCap: number;
  pendingInstructs: number;
  lastAckId: number | null;
  lastError: string | null;
}

export function initialState(trailCap: number = TRAIL_CAP): ConsoleState {
  return {
    connection: "connecting",
    world: null,
    last: null,
    lastStateAtMs: null,
    trail: [],
    trailCap,
    pendingInstructs: 0,
    lastAckId: null,
    lastError: null,
  };
}

export function onConnection(s: ConsoleState, connection: Connection): ConsoleState {
  return { ...s, connection };
}

export function onMessage(s: ConsoleState, msg: ServerMessage, nowMs: number): ConsoleState {
  switch (msg.type) {
    case "world":
      return { ...s, world: msg };
    case "state": {
      const trail = s.trail.concat([[msg.drone.x, msg.drone.y]]);
      if (trail.length > s.trailCap) trail.splice(0, trail.length - s.trailCap);
      return { ...s, last: msg, lastStateAtMs: nowMs, trail };
    }
    case "ack":
      return {
        ...s,
        pendingInstructs: msg.id !== undefined
          ? Math.max(0, s.pendingInstructs - 1)
          : s.pendingInstructs,
        lastAckId: msg.id ?? s.lastAckId,
      };
    case "error":
      return { ...s, lastError: msg.reason };
  }
}

export function markInstructSent(s: ConsoleState): ConsoleState {
  return { ...s, pendingInstructs: s.pendingInstructs + 1 };
}

// The map goes into a degraded banner when the stream stops for longer
// than a couple of control periods would explain.
export function isStale(s: ConsoleState, nowMs: number): boolean {
  return s.lastStateAtMs === null || nowMs - s.lastStateAtMs > STALE_AFTER_MS;
}

function wrapAngle(a: number): number {
  let r = a % (2 * Math.PI);
  if (r <= -Math.PI) r += 2 * Math.PI;
  if (r > Math.PI) r -= 2 * Math.PI;
  return r;
}

// Yaw (clockwise-positive from +x) pointing along a world vector; the
// mirror of the service's bearing convention.
export function bearingOfVector(vx: number, vy: number): number {
  return Math.atan2(-vy, vx);
}

// Drag arrow to normalized instruction direction, relative to the
// drone's current heading: aligned drag reads 0, a quarter turn right
// reads just under +1. Quarter-turn-plus drags clamp rather than wrap
// past the representable range.
export function duFromDrag(droneYaw: number, dragX: number, dragY: number): number {
  const rel = wrapAngle(bearingOfVector(dragX, dragY) - droneYaw) / HALF_PI;
  return Math.max(-DU_LIMIT, Math.min(DU_LIMIT, rel));
}

export interface InstructionDraftResult {
  x: number;
  y: number;
  du: number;
  radius: number;
}

// null = drag too short to define a direction.
export function resolveDraft(droneYaw: number, draft: Draft): InstructionDraftResult | null {
  if (draft.dragScreenPx < MIN_DRAG_PX) return null;
  return {
    x: draft.anchorX,
    y: draft.anchorY,
    du: duFromDrag(droneYaw, draft.dragX, draft.dragY),
    radius: draft.radius,
  };
}
