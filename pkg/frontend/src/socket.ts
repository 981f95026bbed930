/**
 * Connection layer: one WebSocket to the piloting service, with
 * handshake-on-hello, automatic reconnect, and short-lived buffering of
 * pilot commands across a drop.
 *
 * A protocol version mismatch is terminal: the socket reports a banner
 * and stops; silently piloting through a protocol we do not speak is
 * worse than not piloting. Everything else (refused connection, server
 * restart, mid-session drop) reconnects with bounded backoff, so a
 * restarted server is picked back up within a few seconds.
 */

import {
  HelloPayload,
  ProtocolError,
  ServerFrame,
  Vec3,
  commandFrame,
  controlFrame,
  parseServerFrame,
  versionMismatch,
} from "./protocol.js";

/** The subset of the browser WebSocket surface the cockpit uses. */
export interface WsLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  send(data: string): void;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

export type SocketStatus =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "version-mismatch"
  | "closed";

export interface CockpitSocketEvents {
  onFrame?: (frame: ServerFrame, nowMs: number) => void;
  onStatus?: (status: SocketStatus, banner: string | null) => void;
}

// Commands ride out a disconnect for at most this long before they are
// stale enough to mislead the safety layer.
export const COMMAND_BUFFER_MS = 200;

const BACKOFF_START_MS = 250;
const BACKOFF_CAP_MS = 2000;

export class CockpitSocket {
  status: SocketStatus = "closed";
  banner: string | null = null;
  hello: HelloPayload | null = null;
  /** Inbound protocol violations observed (display only). */
  protocolErrors = 0;

  private ws: WsLike | null = null;
  private outSeq = 0;
  private lastInSeq: number | null = null;
  private lastT = 0;
  private sawHello = false;
  private halted = false;
  private backoffMs = BACKOFF_START_MS;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private buffered: { v_u: Vec3; atMs: number }[] = [];

  constructor(
    private url: string,
    private makeWs: WsFactory,
    private events: CockpitSocketEvents = {},
    private now: () => number = Date.now,
  ) {}

  connect(): void {
    if (this.halted) return;
    this.clearTimer();
    const old = this.ws;
    if (old) {
      this.ws = null; // identity check in onclose ignores the stale socket
      old.close();
    }
    this.setStatus(this.status === "closed" ? "connecting" : this.status, this.banner);
    let ws: WsLike;
    try {
      ws = this.makeWs(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;
    this.sawHello = false;
    this.lastInSeq = null;
    this.outSeq = 0; // seq is per connection, both directions
    ws.onopen = () => {
      // connected at the transport level; stay "connecting" until hello
    };
    ws.onmessage = (ev) => this.handleMessage(String(ev.data));
    ws.onerror = () => {
      // onclose follows; nothing to do here
    };
    ws.onclose = () => {
      if (this.ws !== ws) return; // superseded connection
      this.ws = null;
      if (this.halted) return;
      this.setStatus("reconnecting", this.banner);
      this.scheduleReconnect();
    };
  }

  /** Stop for good (page teardown). */
  close(): void {
    this.halted = true;
    this.clearTimer();
    const ws = this.ws;
    this.ws = null;
    if (ws) ws.close();
    this.setStatus("closed", this.banner);
  }

  get connected(): boolean {
    return this.ws !== null && this.sawHello;
  }

  /**
   * Queue a pilot velocity for the server; returns the seq used, or null
   * if the command was only buffered. While disconnected the command is
   * buffered for up to COMMAND_BUFFER_MS and flushed (in order) once the
   * next handshake completes; anything older is dropped.
   */
  sendCommand(v_u: Vec3): number | null {
    if (this.halted) return null;
    if (this.connected) {
      const seq = this.outSeq++;
      this.ws!.send(commandFrame(seq, this.lastT, v_u));
      return seq;
    }
    const nowMs = this.now();
    this.buffered.push({ v_u, atMs: nowMs });
    this.pruneBuffer(nowMs);
    return null;
  }

  /** Session control; not buffered (a stale reset is a surprise, not a hover). */
  sendControl(op: string, extra: Record<string, unknown> = {}): boolean {
    if (!this.connected) return false;
    this.ws!.send(controlFrame(this.outSeq++, this.lastT, op, extra));
    return true;
  }

  private handleMessage(text: string): void {
    let frame: ServerFrame;
    try {
      frame = parseServerFrame(text);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.protocolErrors += 1;
        return;
      }
      throw err;
    }
    if (this.lastInSeq !== null && frame.seq <= this.lastInSeq) {
      this.protocolErrors += 1;
      return;
    }
    this.lastInSeq = frame.seq;
    this.lastT = frame.t;
    if (!this.sawHello) {
      if (frame.kind !== "hello") return; // ignore until handshake
      const mismatch = versionMismatch(frame.payload);
      if (mismatch !== null) {
        this.halted = true;
        this.setStatus("version-mismatch", mismatch);
        const ws = this.ws;
        this.ws = null;
        if (ws) ws.close();
        return;
      }
      this.sawHello = true;
      this.hello = frame.payload;
      this.backoffMs = BACKOFF_START_MS;
      this.setStatus("connected", null);
      this.flushBuffer();
    } else if (frame.kind === "hello") {
      // scenario swapped server-side; geometry and limits change
      this.hello = frame.payload;
    }
    this.events.onFrame?.(frame, this.now());
  }

  private flushBuffer(): void {
    const nowMs = this.now();
    this.pruneBuffer(nowMs);
    const pending = this.buffered;
    this.buffered = [];
    for (const { v_u } of pending) {
      this.ws!.send(commandFrame(this.outSeq++, this.lastT, v_u));
    }
  }

  private pruneBuffer(nowMs: number): void {
    this.buffered = this.buffered.filter((b) => nowMs - b.atMs <= COMMAND_BUFFER_MS);
  }

  private scheduleReconnect(): void {
    if (this.halted || this.reconnectTimer !== null) return;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_CAP_MS);
  }

  private clearTimer(): void {
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
  }

  private setStatus(status: SocketStatus, banner: string | null): void {
    const changed = status !== this.status || banner !== this.banner;
    this.status = status;
    this.banner = banner;
    if (changed) this.events.onStatus?.(status, banner);
  }
}
