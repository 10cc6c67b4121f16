// Thin socket wrapper: parses incoming frames, reports status changes,
// reconnects with a fixed backoff. The WebSocket constructor is
// injectable so logic above it stays testable without a server.

import { parseServerMessage, ProtocolError, ServerMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onMessage(msg: ServerMessage): void;
  onStatus(status: "connecting" | "open" | "closed"): void;
  onProtocolError?(err: ProtocolError): void;
}

const RECONNECT_DELAY_MS = 1000;

export class Client {
  private sock: SocketLike | null = null;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: ClientHandlers,
    private readonly factory: SocketFactory =
      (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    if (this.stopped) return;
    this.handlers.onStatus("connecting");
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => this.handlers.onStatus("open");
    // browsers fire error then close; node's client can surface a failed
    // connect as error alone, so either event retires the socket, once
    let retired = false;
    const retire = () => {
      if (retired) return;
      retired = true;
      this.handlers.onStatus("closed");
      this.sock = null;
      if (!this.stopped) {
        this.timer = setTimeout(() => this.connect(), RECONNECT_DELAY_MS);
      }
    };
    sock.onclose = retire;
    sock.onerror = retire;
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") return; // service speaks text frames
      let msg: ServerMessage;
      try {
        msg = parseServerMessage(ev.data);
      } catch (err) {
        if (err instanceof ProtocolError && this.handlers.onProtocolError) {
          this.handlers.onProtocolError(err);
          return;
        }
        throw err;
      }
      this.handlers.onMessage(msg);
    };
  }

  send(data: string): boolean {
    if (this.sock === null) return false;
    try {
      this.sock.send(data);
      return true;
    } catch {
      return false;
    }
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.sock?.close();
  }
}
