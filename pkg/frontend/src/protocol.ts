// Wire protocol shared with the service: text WebSocket frames, JSON
// bodies. Parsing is strict; a malformed server message throws rather
// than rendering garbage.

export class ProtocolError extends Error {}

export type Mode = "track" | "patrol" | "paused";

export interface DroneState {
  x: number;
  y: number;
  yaw: number;
  alt: number;
}

export interface NavigatorState {
  x: number;
  y: number;
  bearing: number;
  speed: number;
}

export interface Command {
  d: number;
  s: number;
  t: number;
}

export interface Candidate {
  dir: number;
  peak: number;
}

export interface InstructionRow {
  id: number;
  x: number;
  y: number;
  du: number;
  radius: number;
  active: boolean;
}

export interface WorldMsg {
  type: "world";
  nodes: Record<string, [number, number]>;
  edges: [number, number, number][];
}

export interface StateMsg {
  type: "state";
  tick: number;
  mode: Mode;
  drone: DroneState;
  navigator: NavigatorState | null;
  command: Command | null;
  candidates: Candidate[];
  chosen: number | null;
  instruction: number | null;
  instructions: InstructionRow[];
  frame_b64?: string;
  frame_size?: [number, number];
}

export interface AckMsg {
  type: "ack";
  id?: number;
  mode?: string;
}

export interface ErrorMsg {
  type: "error";
  reason: string;
}

export type ServerMessage = WorldMsg | StateMsg | AckMsg | ErrorMsg;

function fail(what: string): never {
  throw new ProtocolError(`malformed server message: ${what}`);
}

function num(v: unknown, what: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) fail(what);
  return v;
}

function intOrNull(v: unknown, what: string): number | null {
  if (v === null) return null;
  if (typeof v !== "number" || !Number.isInteger(v)) fail(what);
  return v;
}

function obj(v: unknown, what: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) fail(what);
  return v as Record<string, unknown>;
}

function pair(v: unknown, what: string): [number, number] {
  if (!Array.isArray(v) || v.length !== 2) fail(what);
  return [num(v[0], what), num(v[1], what)];
}

function parseWorld(m: Record<string, unknown>): WorldMsg {
  const rawNodes = obj(m.nodes, "world.nodes");
  const nodes: Record<string, [number, number]> = {};
  for (const [k, v] of Object.entries(rawNodes)) {
    nodes[k] = pair(v, `world.nodes.${k}`);
  }
  if (!Array.isArray(m.edges)) fail("world.edges");
  const edges = m.edges.map((e, i): [number, number, number] => {
    if (!Array.isArray(e) || e.length !== 3) fail(`world.edges[${i}]`);
    const [a, b, w] = e;
    const an = num(a, "edge node");
    const bn = num(b, "edge node");
    if (!(String(an) in nodes) || !(String(bn) in nodes)) {
      fail(`world.edges[${i}] references unknown node`);
    }
    return [an, bn, num(w, "edge width")];
  });
  return { type: "world", nodes, edges };
}

function parseDrone(v: unknown): DroneState {
  const d = obj(v, "state.drone");
  return {
    x: num(d.x, "drone.x"),
    y: num(d.y, "drone.y"),
    yaw: num(d.yaw, "drone.yaw"),
    alt: num(d.alt, "drone.alt"),
  };
}

function parseState(m: Record<string, unknown>): StateMsg {
  const mode = m.mode;
  if (mode !== "track" && mode !== "patrol" && mode !== "paused") {
    fail("state.mode");
  }
  let navigator: NavigatorState | null = null;
  if (m.navigator !== null && m.navigator !== undefined) {
    const n = obj(m.navigator, "state.navigator");
    navigator = {
      x: num(n.x, "navigator.x"),
      y: num(n.y, "navigator.y"),
      bearing: num(n.bearing, "navigator.bearing"),
      speed: num(n.speed, "navigator.speed"),
    };
  }
  let command: Command | null = null;
  if (m.command !== null && m.command !== undefined) {
    const c = obj(m.command, "state.command");
    command = {
      d: num(c.d, "command.d"),
      s: num(c.s, "command.s"),
      t: num(c.t, "command.t"),
    };
  }
  if (!Array.isArray(m.candidates)) fail("state.candidates");
  const candidates = m.candidates.map((c) => {
    const r = obj(c, "candidate");
    return { dir: num(r.dir, "candidate.dir"), peak: num(r.peak, "candidate.peak") };
  });
  if (!Array.isArray(m.instructions)) fail("state.instructions");
  const instructions = m.instructions.map((v) => {
    const r = obj(v, "instruction");
    if (typeof r.active !== "boolean") fail("instruction.active");
    return {
      id: num(r.id, "instruction.id"),
      x: num(r.x, "instruction.x"),
      y: num(r.y, "instruction.y"),
      du: num(r.du, "instruction.du"),
      radius: num(r.radius, "instruction.radius"),
      active: r.active,
    };
  });
  const msg: StateMsg = {
    type: "state",
    tick: num(m.tick, "state.tick"),
    mode,
    drone: parseDrone(m.drone),
    navigator,
    command,
    candidates,
    chosen: intOrNull(m.chosen, "state.chosen"),
    instruction: intOrNull(m.instruction, "state.instruction"),
    instructions,
  };
  if (m.frame_b64 !== undefined) {
    if (typeof m.frame_b64 !== "string") fail("state.frame_b64");
    msg.frame_b64 = m.frame_b64;
    msg.frame_size = pair(m.frame_size, "state.frame_size");
  }
  return msg;
}

export function parseServerMessage(raw: string): ServerMessage {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    fail("not JSON");
  }
  const m = obj(parsed, "not an object");
  switch (m.type) {
    case "world":
      return parseWorld(m);
    case "state":
      return parseState(m);
    case "ack": {
      const out: AckMsg = { type: "ack" };
      if (m.id !== undefined) out.id = num(m.id, "ack.id");
      if (m.mode !== undefined) {
        if (typeof m.mode !== "string") fail("ack.mode");
        out.mode = m.mode;
      }
      return out;
    }
    case "error": {
      if (typeof m.reason !== "string") fail("error.reason");
      return { type: "error", reason: m.reason };
    }
    default:
      fail(`unknown type ${String(m.type)}`);
  }
}

// Client -> server messages. The service ignores unknown fields, so the
// payloads stay minimal.

export function instructMessage(
  x: number, y: number, du: number, radius?: number, id?: number,
): string {
  const m: Record<string, number | string> = { type: "instruct", x, y, du };
  if (radius !== undefined) m.radius = radius;
  if (id !== undefined) m.id = id;
  return JSON.stringify(m);
}

export function removeMessage(id: number): string {
  return JSON.stringify({ type: "remove", id });
}

export function modeMessage(value: Mode): string {
  return JSON.stringify({ type: "mode", mode: value });
}
