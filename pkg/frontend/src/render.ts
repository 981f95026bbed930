/**
 * Canvas renderer: two orthogonal panes (top-down XY, side XZ) plus a
 * HUD band. Pure function of (snapshot, wall clock); all state lives in
 * the store, so tests can drive it with a recording canvas stub.
 *
 * Everything safety-relevant is drawn every frame: conductors, the
 * avoidance sphere r_a, the safety sphere r_s (flashing when a detection
 * is inside it), the e-brake cone along the velocity axis (highlighted
 * while braking), per-sensor detection points, and both velocity arrows
 * so a diverging v_out is visible next to the pilot's v_u.
 */

import { Mode, StatePayload, Vec3 } from "./protocol.js";
import { Snapshot } from "./store.js";

/** The 2D context surface the renderer uses (stubbable in tests). */
export interface Ctx2D {
  // string is all the renderer assigns; the wider browser union reads fine
  fillStyle: string | unknown;
  strokeStyle: string | unknown;
  lineWidth: number;
  font: string;
  textAlign: string;
  textBaseline: string;
  globalAlpha: number;
  save(): void;
  restore(): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  clip(): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  setLineDash(segments: number[]): void;
}

export const SENSOR_COLORS: Record<string, string> = {
  front: "#ff5d5d",
  rear: "#57d95c",
  left: "#5b8cff",
  right: "#ffa034",
  top: "#c77dff",
  bottom: "#4de3e3",
};
const SENSOR_FALLBACK = "#e8e8e8";

export const MODE_COLORS: Record<Mode, string> = {
  cruise: "#9fd49f",
  tangential: "#ffc04d",
  ebraking: "#ff4d4d",
  rejecting: "#ff66ff",
};

export const V_U_COLOR = "#6ab0ff";
export const V_OUT_COLOR = "#39d98a";
export const RS_FLASH_FILL = "rgba(255, 70, 70, 0.3)";
export const CONE_HIGHLIGHT_FILL = "rgba(255, 120, 0, 0.35)";
export const CONE_IDLE_STROKE = "rgba(255, 160, 60, 0.5)";
export const STALE_COLOR = "#ff5d5d";

const HUD_H = 84;
const PANE_GAP = 8;
const GRID_STEP_M = 5;
const ARROW_M_PER_MPS = 0.5;

interface Pane {
  x0: number;
  y0: number;
  w: number;
  h: number;
  label: string;
  ax: 0 | 1 | 2; // world component on the pane's horizontal axis
  ay: 0 | 1 | 2; // world component on the pane's vertical axis (up)
}

function paneScale(pane: Pane, zoom: number): number {
  return Math.min(pane.w, pane.h) / (2 * zoom);
}

function toPx(pane: Pane, center: Vec3, zoom: number, p: Vec3): [number, number] {
  const s = paneScale(pane, zoom);
  return [
    pane.x0 + pane.w / 2 + (p[pane.ax] - center[pane.ax]) * s,
    pane.y0 + pane.h / 2 - (p[pane.ay] - center[pane.ay]) * s,
  ];
}

function dist3(a: Vec3, b: Vec3): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

function norm3(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

function fmtVec(v: Vec3): string {
  return `[${v[0].toFixed(1)}, ${v[1].toFixed(1)}, ${v[2].toFixed(1)}]`;
}

export function render(
  ctx: Ctx2D,
  width: number,
  height: number,
  snap: Snapshot,
  nowMs: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);

  const paneW = (width - 3 * PANE_GAP) / 2;
  const paneH = height - HUD_H - 2 * PANE_GAP;
  const paneY = HUD_H + PANE_GAP;
  const panes: Pane[] = [
    { x0: PANE_GAP, y0: paneY, w: paneW, h: paneH, label: "TOP  x-y", ax: 0, ay: 1 },
    { x0: 2 * PANE_GAP + paneW, y0: paneY, w: paneW, h: paneH, label: "SIDE  x-z", ax: 0, ay: 2 },
  ];

  const center: Vec3 =
    snap.state?.position ?? snap.hello?.scenario.uav_start ?? [0, 0, 0];
  for (const pane of panes) {
    drawPane(ctx, pane, center, snap, nowMs);
  }
  drawHud(ctx, width, snap, nowMs);
}

function drawPane(ctx: Ctx2D, pane: Pane, center: Vec3, snap: Snapshot, nowMs: number): void {
  ctx.save();
  ctx.beginPath();
  ctx.rect(pane.x0, pane.y0, pane.w, pane.h);
  ctx.clip();

  ctx.fillStyle = "#151b22";
  ctx.fillRect(pane.x0, pane.y0, pane.w, pane.h);
  drawGrid(ctx, pane, center, snap.zoom);

  const st = snap.state;
  if (snap.hello) {
    ctx.strokeStyle = "#8fa3b8";
    ctx.lineWidth = 2;
    ctx.setLineDash([]);
    for (const c of snap.hello.scenario.conductors) {
      const [ax, ay] = toPx(pane, center, snap.zoom, c.a);
      const [bx, by] = toPx(pane, center, snap.zoom, c.b);
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }
  }

  if (snap.trail.length >= 2) {
    ctx.strokeStyle = "rgba(120, 180, 255, 0.45)";
    ctx.lineWidth = 1;
    ctx.beginPath();
    const [tx, ty] = toPx(pane, center, snap.zoom, snap.trail[0]!);
    ctx.moveTo(tx, ty);
    for (let i = 1; i < snap.trail.length; i++) {
      const [x, y] = toPx(pane, center, snap.zoom, snap.trail[i]!);
      ctx.lineTo(x, y);
    }
    ctx.stroke();
  }

  if (st) {
    drawSpheres(ctx, pane, center, snap, st, nowMs);
    drawCone(ctx, pane, center, snap, st);
    drawDetections(ctx, pane, center, snap, st);
    drawUav(ctx, pane, center, snap, st);
    drawVelocityArrows(ctx, pane, center, snap, st);
  }

  ctx.restore();
  ctx.strokeStyle = "#2a3542";
  ctx.lineWidth = 1;
  ctx.setLineDash([]);
  ctx.strokeRect(pane.x0, pane.y0, pane.w, pane.h);
  ctx.fillStyle = "#7f8ea0";
  ctx.font = "12px ui-monospace, monospace";
  ctx.textAlign = "left";
  ctx.textBaseline = "top";
  ctx.fillText(pane.label, pane.x0 + 6, pane.y0 + 5);
}

function drawGrid(ctx: Ctx2D, pane: Pane, center: Vec3, zoom: number): void {
  const s = paneScale(pane, zoom);
  ctx.strokeStyle = "#1d2630";
  ctx.lineWidth = 1;
  ctx.setLineDash([]);
  const spanX = pane.w / (2 * s);
  const spanY = pane.h / (2 * s);
  const x0 = Math.floor((center[pane.ax] - spanX) / GRID_STEP_M) * GRID_STEP_M;
  const y0 = Math.floor((center[pane.ay] - spanY) / GRID_STEP_M) * GRID_STEP_M;
  for (let gx = x0; gx <= center[pane.ax] + spanX; gx += GRID_STEP_M) {
    const px = pane.x0 + pane.w / 2 + (gx - center[pane.ax]) * s;
    ctx.beginPath();
    ctx.moveTo(px, pane.y0);
    ctx.lineTo(px, pane.y0 + pane.h);
    ctx.stroke();
  }
  for (let gy = y0; gy <= center[pane.ay] + spanY; gy += GRID_STEP_M) {
    const py = pane.y0 + pane.h / 2 - (gy - center[pane.ay]) * s;
    ctx.beginPath();
    ctx.moveTo(pane.x0, py);
    ctx.lineTo(pane.x0 + pane.w, py);
    ctx.stroke();
  }
  if (pane.ay === 2) {
    // ground line in the side pane
    const py = pane.y0 + pane.h / 2 - (0 - center[2]) * s;
    ctx.strokeStyle = "#4a4232";
    ctx.beginPath();
    ctx.moveTo(pane.x0, py);
    ctx.lineTo(pane.x0 + pane.w, py);
    ctx.stroke();
  }
}

function drawSpheres(
  ctx: Ctx2D,
  pane: Pane,
  center: Vec3,
  snap: Snapshot,
  st: StatePayload,
  nowMs: number,
): void {
  const s = paneScale(pane, snap.zoom);
  const [px, py] = toPx(pane, center, snap.zoom, st.position);

  ctx.strokeStyle = "#3d5a78";
  ctx.lineWidth = 1;
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  ctx.arc(px, py, st.r_a * s, 0, Math.PI * 2);
  ctx.stroke();
  ctx.setLineDash([]);

  const breach = st.detections.some((d) => dist3(d.point, st.position) < st.r_s);
  ctx.beginPath();
  ctx.arc(px, py, st.r_s * s, 0, Math.PI * 2);
  if (breach) {
    // flash: visible pulse instead of a steady fill
    const pulse = 0.6 + 0.4 * Math.sin(nowMs / 70);
    ctx.globalAlpha = pulse;
    ctx.fillStyle = RS_FLASH_FILL;
    ctx.fill();
    ctx.globalAlpha = 1;
    ctx.strokeStyle = "#ff4d4d";
    ctx.lineWidth = 2;
  } else {
    ctx.strokeStyle = "#7a4d4d";
    ctx.lineWidth = 1;
  }
  ctx.stroke();
}

function drawCone(ctx: Ctx2D, pane: Pane, center: Vec3, snap: Snapshot, st: StatePayload): void {
  const axis = st.ebrake.axis;
  if (!axis) return;
  const s = paneScale(pane, snap.zoom);
  const ux = axis[pane.ax];
  const uy = axis[pane.ay];
  const planar = Math.hypot(ux, uy);
  if (planar < 1e-3) return; // axis is perpendicular to this pane
  const heading = Math.atan2(-uy, ux); // canvas y grows downward
  const [px, py] = toPx(pane, center, snap.zoom, st.ebrake.apex);
  const len = st.ebrake.l_h * s;
  const a = st.ebrake.alpha_rad;
  ctx.beginPath();
  ctx.moveTo(px, py);
  ctx.lineTo(px + len * Math.cos(heading - a), py + len * Math.sin(heading - a));
  ctx.arc(px, py, len, heading - a, heading + a);
  ctx.closePath();
  if (st.mode === "ebraking") {
    ctx.fillStyle = CONE_HIGHLIGHT_FILL;
    ctx.fill();
    ctx.strokeStyle = "#ff7b00";
    ctx.lineWidth = 2;
  } else {
    ctx.strokeStyle = CONE_IDLE_STROKE;
    ctx.lineWidth = 1;
  }
  ctx.stroke();
}

function drawDetections(
  ctx: Ctx2D,
  pane: Pane,
  center: Vec3,
  snap: Snapshot,
  st: StatePayload,
): void {
  for (const d of st.detections) {
    const [x, y] = toPx(pane, center, snap.zoom, d.point);
    ctx.fillStyle = SENSOR_COLORS[d.sensor] ?? SENSOR_FALLBACK;
    ctx.beginPath();
    ctx.arc(x, y, 3.5, 0, Math.PI * 2);
    ctx.fill();
  }
}

function drawUav(ctx: Ctx2D, pane: Pane, center: Vec3, snap: Snapshot, st: StatePayload): void {
  const [px, py] = toPx(pane, center, snap.zoom, st.position);
  ctx.fillStyle = st.collided ? "#ff3333" : "#f2f5f8";
  if (pane.ax === 0 && pane.ay === 1) {
    // top pane: triangle nose along yaw (yaw 0 = +x = screen right)
    const r = 7;
    const a = -st.yaw; // canvas y is down
    ctx.beginPath();
    ctx.moveTo(px + r * Math.cos(a), py + r * Math.sin(a));
    ctx.lineTo(px + r * Math.cos(a + 2.5), py + r * Math.sin(a + 2.5));
    ctx.lineTo(px + r * Math.cos(a - 2.5), py + r * Math.sin(a - 2.5));
    ctx.closePath();
    ctx.fill();
  } else {
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fill();
  }
}

function drawVelocityArrows(
  ctx: Ctx2D,
  pane: Pane,
  center: Vec3,
  snap: Snapshot,
  st: StatePayload,
): void {
  drawArrow(ctx, pane, center, snap, st.position, st.v_u, V_U_COLOR);
  drawArrow(ctx, pane, center, snap, st.position, st.v_out, V_OUT_COLOR);
}

function drawArrow(
  ctx: Ctx2D,
  pane: Pane,
  center: Vec3,
  snap: Snapshot,
  from: Vec3,
  vel: Vec3,
  color: string,
): void {
  if (norm3(vel) < 1e-3) return;
  const tip: Vec3 = [
    from[0] + vel[0] * ARROW_M_PER_MPS,
    from[1] + vel[1] * ARROW_M_PER_MPS,
    from[2] + vel[2] * ARROW_M_PER_MPS,
  ];
  const [x0, y0] = toPx(pane, center, snap.zoom, from);
  const [x1, y1] = toPx(pane, center, snap.zoom, tip);
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.setLineDash([]);
  ctx.beginPath();
  ctx.moveTo(x0, y0);
  ctx.lineTo(x1, y1);
  ctx.stroke();
  const ang = Math.atan2(y1 - y0, x1 - x0);
  ctx.beginPath();
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - 7 * Math.cos(ang - 0.45), y1 - 7 * Math.sin(ang - 0.45));
  ctx.moveTo(x1, y1);
  ctx.lineTo(x1 - 7 * Math.cos(ang + 0.45), y1 - 7 * Math.sin(ang + 0.45));
  ctx.stroke();
}

function drawHud(ctx: Ctx2D, width: number, snap: Snapshot, nowMs: number): void {
  ctx.fillStyle = "#0b0e12";
  ctx.fillRect(0, 0, width, HUD_H);

  // connection status, left
  const st = snap.status;
  const dotColor =
    st === "connected" ? "#39d98a" : st === "version-mismatch" ? "#ff4d4d" : "#ffc04d";
  ctx.fillStyle = dotColor;
  ctx.beginPath();
  ctx.arc(14, 14, 5, 0, Math.PI * 2);
  ctx.fill();
  ctx.fillStyle = "#cfd8e3";
  ctx.font = "13px ui-monospace, monospace";
  ctx.textAlign = "left";
  ctx.textBaseline = "middle";
  ctx.fillText(st, 26, 14);
  if (snap.banner) {
    ctx.fillStyle = "#ff6b6b";
    ctx.fillText(snap.banner, 26, 32);
  }
  if (snap.hello) {
    ctx.fillStyle = "#8fa3b8";
    ctx.fillText(
      `scenario ${snap.hello.scenario.name}  |v|max ${snap.hello.limits.v_max_hard} m/s`,
      26,
      snap.banner ? 50 : 32,
    );
  }

  // mode, center, prominent
  const mode = snap.state?.mode ?? null;
  ctx.font = "28px ui-monospace, monospace";
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  ctx.fillStyle = mode ? MODE_COLORS[mode] : "#5a6673";
  ctx.fillText(mode ? mode.toUpperCase() : "NO STATE", width / 2, 22);

  // badges under the mode
  ctx.font = "13px ui-monospace, monospace";
  let badgeY = 46;
  if (snap.state?.paused) {
    ctx.fillStyle = "#ffc04d";
    ctx.fillText("PAUSED", width / 2, badgeY);
    badgeY += 16;
  }
  if (snap.state?.collided) {
    ctx.fillStyle = "#ff4d4d";
    ctx.fillText("COLLIDED", width / 2, badgeY);
    badgeY += 16;
  }
  if (snap.stale) {
    ctx.fillStyle = STALE_COLOR;
    ctx.fillText(`STALE ${(snap.sinceStateMs / 1000).toFixed(1)}s`, width / 2, badgeY);
  }

  // telemetry, right
  ctx.textAlign = "right";
  ctx.fillStyle = "#cfd8e3";
  const x = width - 10;
  ctx.fillText(`t ${snap.stateT.toFixed(1)}s   ${snap.fps} fps`, x, 12);
  const vu = snap.state?.v_u ?? snap.pilot.v_u;
  const vout = snap.state?.v_out ?? null;
  ctx.fillStyle = V_U_COLOR;
  ctx.fillText(`v_u ${fmtVec(vu)} |${norm3(vu).toFixed(1)}|`, x, 30);
  if (vout) {
    ctx.fillStyle = V_OUT_COLOR;
    ctx.fillText(`v_out ${fmtVec(vout)} |${norm3(vout).toFixed(1)}|`, x, 48);
  }
  ctx.fillStyle = "#8fa3b8";
  const ack = snap.state?.last_command_seq;
  ctx.fillText(
    `speed ${snap.pilot.speed.toFixed(1)} m/s   cmd #${snap.pilot.lastSentSeq ?? "-"} ack #${
      ack ?? "-"
    }`,
    x,
    66,
  );

  // sensor color legend, bottom-left of the HUD
  ctx.textAlign = "left";
  let lx = 26;
  for (const [name, color] of Object.entries(SENSOR_COLORS)) {
    ctx.fillStyle = color;
    ctx.fillRect(lx, 62, 8, 8);
    ctx.fillStyle = "#8fa3b8";
    ctx.fillText(name, lx + 12, 66);
    lx += 12 + name.length * 8 + 14;
  }
}
