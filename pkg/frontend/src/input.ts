/**
 * Keyboard teleoperation: held keys become a world-frame desired
 * velocity, sampled on a fixed tick of at most 30 Hz. Releasing all keys
 * sends one zero vector (hover) and then goes quiet; the avoidance layer
 * server-side holds the last command, so silence means "keep hovering",
 * not "keep flying".
 *
 * Axes are continuous internally (a gamepad can feed setAxis directly);
 * keys snap them to -1/0/+1. A deadzone strips small analog noise before
 * scaling by the speed setting.
 */

import { Vec3 } from "./protocol.js";

export const MAX_SPEED_MPS = 10;
export const MIN_TICK_MS = 34; // 1000/30, rounded up: never more than 30 Hz
export const DEADZONE = 0.15;

export interface KeyEventLike {
  key: string;
}

// world frame: +x forward on screen-right of the top pane, +z up
const KEY_AXES: Record<string, [number, 1 | -1]> = {
  w: [0, 1],
  arrowup: [0, 1],
  s: [0, -1],
  arrowdown: [0, -1],
  a: [1, 1],
  arrowleft: [1, 1],
  d: [1, -1],
  arrowright: [1, -1],
  r: [2, 1],
  pageup: [2, 1],
  f: [2, -1],
  pagedown: [2, -1],
};

export function applyDeadzone(value: number, deadzone: number = DEADZONE): number {
  if (Math.abs(value) < deadzone) return 0;
  // rescale so output still spans the full [-1, 1]
  const sign = value < 0 ? -1 : 1;
  return sign * ((Math.abs(value) - deadzone) / (1 - deadzone));
}

export class KeyboardPilot {
  private speed = 5;
  private axes: [number, number, number] = [0, 0, 0];
  private held = new Map<number, Set<string>>([
    [0, new Set()],
    [1, new Set()],
    [2, new Set()],
  ]);
  private lastSent: Vec3 = [0, 0, 0];
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private send: (v_u: Vec3) => void) {}

  setSpeed(speed: number): void {
    this.speed = Math.min(Math.max(0, speed), MAX_SPEED_MPS);
  }

  getSpeed(): number {
    return this.speed;
  }

  /** Direct axis injection (gamepad or scripted input), value in [-1, 1]. */
  setAxis(index: 0 | 1 | 2, value: number): void {
    this.axes[index] = Math.min(1, Math.max(-1, value));
  }

  keydown(ev: KeyEventLike): void {
    const hit = KEY_AXES[ev.key.toLowerCase()];
    if (!hit) return;
    const [axis, dir] = hit;
    this.held.get(axis)!.add(`${dir}`);
    this.refreshAxisFromKeys(axis);
  }

  keyup(ev: KeyEventLike): void {
    const hit = KEY_AXES[ev.key.toLowerCase()];
    if (!hit) return;
    const [axis, dir] = hit;
    this.held.get(axis)!.delete(`${dir}`);
    this.refreshAxisFromKeys(axis);
  }

  /** Keys for an axis cancel when opposed and win over stale analog input. */
  private refreshAxisFromKeys(axis: number): void {
    const dirs = this.held.get(axis)!;
    const value = (dirs.has("1") ? 1 : 0) + (dirs.has("-1") ? -1 : 0);
    this.axes[axis] = value;
  }

  /** Drop every held key (tab blur loses keyup events); next tick hovers. */
  releaseAll(): void {
    for (const dirs of this.held.values()) dirs.clear();
    this.axes = [0, 0, 0];
  }

  /** Deadzone, scale by speed, cap the vector norm at the speed setting. */
  currentVu(): Vec3 {
    const v: Vec3 = [
      applyDeadzone(this.axes[0]) * this.speed,
      applyDeadzone(this.axes[1]) * this.speed,
      applyDeadzone(this.axes[2]) * this.speed,
    ];
    const norm = Math.hypot(v[0], v[1], v[2]);
    if (norm > this.speed && norm > 0) {
      const k = this.speed / norm;
      return [v[0] * k, v[1] * k, v[2] * k];
    }
    return v;
  }

  /**
   * One input tick: send the current desired velocity. A zero vector is
   * sent exactly once after release so the UAV hovers; repeating it
   * forever would just be noise.
   */
  tick(): void {
    const v = this.currentVu();
    const isZero = v[0] === 0 && v[1] === 0 && v[2] === 0;
    const wasZero =
      this.lastSent[0] === 0 && this.lastSent[1] === 0 && this.lastSent[2] === 0;
    if (isZero && wasZero) return;
    this.lastSent = v;
    this.send(v);
  }

  start(intervalMs: number = MIN_TICK_MS): void {
    this.stop();
    this.timer = setInterval(() => this.tick(), Math.max(intervalMs, MIN_TICK_MS));
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
