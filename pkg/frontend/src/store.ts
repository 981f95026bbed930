/**
 * Single state store for the cockpit. Socket events, pilot input, and
 * view settings all funnel through here; the renderer reads one
 * snapshot per frame and never touches the socket.
 */

import { HelloPayload, ServerFrame, StatePayload, Vec3 } from "./protocol.js";
import { SocketStatus } from "./socket.js";

export const STALE_AFTER_MS = 500;
const TRAIL_MAX_POINTS = 1200;
const FPS_WINDOW_MS = 1000;

export interface PilotInfo {
  v_u: Vec3;
  speed: number;
  lastSentSeq: number | null;
}

export interface Snapshot {
  hello: HelloPayload | null;
  state: StatePayload | null;
  stateT: number;
  stateSeq: number | null;
  status: SocketStatus;
  banner: string | null;
  /** ms since the last state frame, Infinity before the first one. */
  sinceStateMs: number;
  stale: boolean;
  trail: Vec3[];
  pilot: PilotInfo;
  fps: number;
  zoom: number;
}

export class CockpitStore {
  hello: HelloPayload | null = null;
  state: StatePayload | null = null;
  stateT = 0;
  stateSeq: number | null = null;
  status: SocketStatus = "closed";
  banner: string | null = null;
  trail: Vec3[] = [];
  pilotV: Vec3 = [0, 0, 0];
  pilotSpeed = 5;
  pilotLastSentSeq: number | null = null;
  /** World meters of half-extent shown per pane. */
  zoom = 16;

  private lastStateWallMs = -Infinity;
  private renderedAt: number[] = [];

  applyFrame(frame: ServerFrame, nowMs: number): void {
    if (frame.kind === "hello") {
      this.hello = frame.payload;
      this.state = null;
      this.stateSeq = null;
      this.trail = [];
    } else if (frame.kind === "state") {
      this.state = frame.payload;
      this.stateT = frame.t;
      this.stateSeq = frame.seq;
      this.lastStateWallMs = nowMs;
      this.pushTrail(frame.payload.position);
    }
    // error frames keep the connection; the running protocolErrors count
    // on the socket is what the HUD surfaces
  }

  setStatus(status: SocketStatus, banner: string | null): void {
    this.status = status;
    this.banner = banner;
  }

  setPilot(v_u: Vec3): void {
    this.pilotV = v_u;
  }

  setPilotSentSeq(seq: number): void {
    this.pilotLastSentSeq = seq;
  }

  setSpeed(speed: number): void {
    this.pilotSpeed = Math.min(10, Math.max(0, speed));
  }

  setZoom(halfExtentM: number): void {
    this.zoom = Math.min(80, Math.max(4, halfExtentM));
  }

  sinceStateMs(nowMs: number): number {
    return nowMs - this.lastStateWallMs;
  }

  isStale(nowMs: number): boolean {
    return this.state !== null && this.sinceStateMs(nowMs) > STALE_AFTER_MS;
  }

  /** Call once per painted frame; feeds the HUD frame counter. */
  noteRenderedFrame(nowMs: number): void {
    this.renderedAt.push(nowMs);
    const cutoff = nowMs - FPS_WINDOW_MS;
    while (this.renderedAt.length > 0 && this.renderedAt[0]! < cutoff) {
      this.renderedAt.shift();
    }
  }

  fps(nowMs: number): number {
    const cutoff = nowMs - FPS_WINDOW_MS;
    return this.renderedAt.filter((t) => t >= cutoff).length;
  }

  snapshot(nowMs: number): Snapshot {
    return {
      hello: this.hello,
      state: this.state,
      stateT: this.stateT,
      stateSeq: this.stateSeq,
      status: this.status,
      banner: this.banner,
      sinceStateMs: this.sinceStateMs(nowMs),
      stale: this.isStale(nowMs),
      trail: this.trail,
      pilot: { v_u: this.pilotV, speed: this.pilotSpeed, lastSentSeq: this.pilotLastSentSeq },
      fps: this.fps(nowMs),
      zoom: this.zoom,
    };
  }

  private pushTrail(p: Vec3): void {
    const last = this.trail[this.trail.length - 1];
    if (last && last[0] === p[0] && last[1] === p[1] && last[2] === p[2]) return;
    this.trail.push(p);
    if (this.trail.length > TRAIL_MAX_POINTS) this.trail.shift();
  }
}
