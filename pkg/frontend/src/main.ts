// Console entry point: socket wiring, pointer handling, render loop.

import {
  ConsoleState, Draft, initialState, markInstructSent, onConnection,
  onMessage, resolveDraft,
} from "./console.js";
import { Client } from "./net.js";
import { pushTelemetry, telemetryPoint, TelemetryPoint } from "./overlay.js";
import { instructMessage, Mode, modeMessage, removeMessage } from "./protocol.js";
import { renderCamera, renderMap, renderTelemetry } from "./render.js";
import { Viewport } from "./viewport.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const mapCanvas = el<HTMLCanvasElement>("map");
const camCanvas = el<HTMLCanvasElement>("camera");
const chartCanvas = el<HTMLCanvasElement>("chart");
const statusEl = el<HTMLSpanElement>("status");
const instrList = el<HTMLDivElement>("instructions");
const radiusInput = el<HTMLInputElement>("radius");

const params = new URLSearchParams(location.search);
const url = params.get("server") ?? `ws://${location.hostname || "127.0.0.1"}:8765/`;

let state: ConsoleState = initialState();
let draft: Draft | null = null;
let telemetry: TelemetryPoint[] = [];
let frameImage: HTMLImageElement | null = null;
let frameTickShown = -1;
let fitted = false;

const vp = new Viewport(mapCanvas.width, mapCanvas.height, 4);

const client = new Client(url, {
  onMessage(msg) {
    state = onMessage(state, msg, performance.now());
    if (msg.type === "world" && !fitted) {
      const xs: number[] = [];
      const ys: number[] = [];
      for (const [x, y] of Object.values(msg.nodes)) {
        xs.push(x);
        ys.push(y);
      }
      if (xs.length > 0) {
        vp.fitBounds(Math.min(...xs), Math.min(...ys),
                     Math.max(...xs), Math.max(...ys));
        fitted = true;
      }
    }
    if (msg.type === "state") {
      telemetry = pushTelemetry(telemetry, telemetryPoint(msg));
      if (msg.frame_b64 !== undefined && msg.tick !== frameTickShown) {
        const img = new Image();
        img.onload = () => {
          frameImage = img;
        };
        img.src = `data:image/png;base64,${msg.frame_b64}`;
        frameTickShown = msg.tick;
      }
      renderInstructionList();
    }
    if (msg.type === "error") {
      statusEl.textContent = `server error: ${msg.reason}`;
    }
  },
  onStatus(status) {
    state = onConnection(state, status);
    statusEl.textContent = status;
  },
});

function renderInstructionList(): void {
  const rows = state.last?.instructions ?? [];
  instrList.replaceChildren(
    ...rows.map((row) => {
      const div = document.createElement("div");
      div.className = row.active ? "instr active" : "instr";
      div.textContent =
        `#${row.id} du ${row.du.toFixed(2)} r ${row.radius.toFixed(0)}m `;
      const btn = document.createElement("button");
      btn.textContent = "remove";
      btn.onclick = () => client.send(removeMessage(row.id));
      div.appendChild(btn);
      return div;
    }),
  );
  if (state.pendingInstructs > 0) {
    const div = document.createElement("div");
    div.className = "instr pending";
    div.textContent = `${state.pendingInstructs} awaiting ack`;
    instrList.appendChild(div);
  }
}

// -- map pointer handling: left-drag places an instruction arrow,
//    wheel zooms, middle/right-drag pans --

let panFrom: { x: number; y: number } | null = null;

mapCanvas.addEventListener("pointerdown", (ev) => {
  const rect = mapCanvas.getBoundingClientRect();
  const sx = ev.clientX - rect.left;
  const sy = ev.clientY - rect.top;
  if (ev.button === 0) {
    const w = vp.toWorld({ x: sx, y: sy });
    draft = {
      anchorX: w.x, anchorY: w.y, dragX: 0, dragY: 0,
      dragScreenPx: 0, radius: Number(radiusInput.value) || 50,
    };
  } else {
    panFrom = { x: sx, y: sy };
  }
  mapCanvas.setPointerCapture(ev.pointerId);
});

mapCanvas.addEventListener("pointermove", (ev) => {
  const rect = mapCanvas.getBoundingClientRect();
  const sx = ev.clientX - rect.left;
  const sy = ev.clientY - rect.top;
  if (draft !== null) {
    const w = vp.toWorld({ x: sx, y: sy });
    const a = vp.toScreen({ x: draft.anchorX, y: draft.anchorY });
    draft.dragX = w.x - draft.anchorX;
    draft.dragY = w.y - draft.anchorY;
    draft.dragScreenPx = Math.hypot(sx - a.x, sy - a.y);
  } else if (panFrom !== null) {
    vp.panByScreen(sx - panFrom.x, sy - panFrom.y);
    panFrom = { x: sx, y: sy };
  }
});

mapCanvas.addEventListener("pointerup", () => {
  if (draft !== null && state.last !== null) {
    const resolved = resolveDraft(state.last.drone.yaw, draft);
    if (resolved !== null) {
      const sent = client.send(instructMessage(
        resolved.x, resolved.y, resolved.du, resolved.radius));
      if (sent) state = markInstructSent(state);
    }
  }
  draft = null;
  panFrom = null;
});

mapCanvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const rect = mapCanvas.getBoundingClientRect();
  vp.zoomAt({ x: ev.clientX - rect.left, y: ev.clientY - rect.top },
            ev.deltaY < 0 ? 1.2 : 1 / 1.2);
}, { passive: false });

mapCanvas.addEventListener("contextmenu", (ev) => ev.preventDefault());

for (const mode of ["track", "patrol", "paused"] as Mode[]) {
  el<HTMLButtonElement>(`mode-${mode}`).onclick = () =>
    client.send(modeMessage(mode));
}

function frameLoop(): void {
  const ctx = mapCanvas.getContext("2d");
  if (ctx) renderMap(ctx, vp, state, draft, performance.now());
  const cam = camCanvas.getContext("2d");
  if (cam) renderCamera(cam, camCanvas.width, camCanvas.height,
                        state.last, frameImage);
  const chart = chartCanvas.getContext("2d");
  if (chart) renderTelemetry(chart, chartCanvas.width, chartCanvas.height,
                             telemetry);
  const last = state.last;
  if (last !== null) {
    el<HTMLSpanElement>("tick").textContent =
      `tick ${last.tick} mode ${last.mode}`;
  }
  requestAnimationFrame(frameLoop);
}

client.connect();
requestAnimationFrame(frameLoop);
