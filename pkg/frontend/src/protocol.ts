/**
 * Wire protocol for the piloting service (version "1").
 *
 * Every frame in both directions is {"kind", "seq", "t", "payload"} with
 * seq strictly increasing per direction per connection. The cockpit
 * consumes `hello` and `state`, tolerates `error`, and emits `command`
 * and `control`. Parsing is strict about the envelope and about the
 * payloads the cockpit renders from; unknown extra payload keys are
 * ignored so a newer same-major server stays usable.
 */

export const PROTOCOL_VERSION = "1";

export type Vec3 = [number, number, number];

export const MODES = ["cruise", "tangential", "ebraking", "rejecting"] as const;
export type Mode = (typeof MODES)[number];

export interface ConductorInfo {
  a: Vec3;
  b: Vec3;
  diameter_mm: number;
  detectability: number;
}

export interface HelloPayload {
  protocol: string;
  scenario: {
    name: string;
    duration_s: number;
    conductors: ConductorInfo[];
    uav_start: Vec3;
  };
  limits: {
    v_max_hard: number;
    r_a: number;
    r_s: number;
    v_eb: number;
    alpha_rad: number;
  };
  rates: {
    broadcast_hz: number;
    controller_hz: number;
    physics_dt: number;
  };
}

export interface DetectionInfo {
  sensor: string;
  point: Vec3;
}

export interface EbrakeInfo {
  apex: Vec3;
  axis: Vec3 | null;
  l_h: number;
  alpha_rad: number;
}

export interface StatePayload {
  position: Vec3;
  velocity: Vec3;
  yaw: number;
  v_u: Vec3;
  v_out: Vec3;
  mode: Mode;
  detections: DetectionInfo[];
  ebrake: EbrakeInfo;
  r_a: number;
  r_s: number;
  last_command_seq: number | null;
  paused: boolean;
  collided: boolean;
}

export interface ErrorPayload {
  message: string;
}

export type ServerFrame =
  | { kind: "hello"; seq: number; t: number; payload: HelloPayload }
  | { kind: "state"; seq: number; t: number; payload: StatePayload }
  | { kind: "error"; seq: number; t: number; payload: ErrorPayload };

export class ProtocolError extends Error {}

function fail(msg: string): never {
  throw new ProtocolError(msg);
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function asVec3(x: unknown, name: string): Vec3 {
  if (!Array.isArray(x) || x.length !== 3 || !x.every(isFiniteNumber)) {
    fail(`${name} is not a finite [x, y, z] triple`);
  }
  return [x[0], x[1], x[2]] as Vec3;
}

function asNumber(x: unknown, name: string): number {
  if (!isFiniteNumber(x)) fail(`${name} is not a finite number`);
  return x;
}

function asString(x: unknown, name: string): string {
  if (typeof x !== "string") fail(`${name} is not a string`);
  return x;
}

function asBoolean(x: unknown, name: string): boolean {
  if (typeof x !== "boolean") fail(`${name} is not a boolean`);
  return x;
}

function asObject(x: unknown, name: string): Record<string, unknown> {
  if (typeof x !== "object" || x === null || Array.isArray(x)) {
    fail(`${name} is not an object`);
  }
  return x as Record<string, unknown>;
}

function parseHello(p: Record<string, unknown>): HelloPayload {
  const scenario = asObject(p.scenario, "hello.scenario");
  const limits = asObject(p.limits, "hello.limits");
  const rates = asObject(p.rates, "hello.rates");
  const rawConductors = scenario.conductors;
  if (!Array.isArray(rawConductors)) fail("hello.scenario.conductors is not an array");
  const conductors = rawConductors.map((c, i) => {
    const o = asObject(c, `conductors[${i}]`);
    return {
      a: asVec3(o.a, `conductors[${i}].a`),
      b: asVec3(o.b, `conductors[${i}].b`),
      diameter_mm: asNumber(o.diameter_mm, `conductors[${i}].diameter_mm`),
      detectability: asNumber(o.detectability, `conductors[${i}].detectability`),
    };
  });
  return {
    protocol: asString(p.protocol, "hello.protocol"),
    scenario: {
      name: asString(scenario.name, "hello.scenario.name"),
      duration_s: asNumber(scenario.duration_s, "hello.scenario.duration_s"),
      conductors,
      uav_start: asVec3(scenario.uav_start, "hello.scenario.uav_start"),
    },
    limits: {
      v_max_hard: asNumber(limits.v_max_hard, "hello.limits.v_max_hard"),
      r_a: asNumber(limits.r_a, "hello.limits.r_a"),
      r_s: asNumber(limits.r_s, "hello.limits.r_s"),
      v_eb: asNumber(limits.v_eb, "hello.limits.v_eb"),
      alpha_rad: asNumber(limits.alpha_rad, "hello.limits.alpha_rad"),
    },
    rates: {
      broadcast_hz: asNumber(rates.broadcast_hz, "hello.rates.broadcast_hz"),
      controller_hz: asNumber(rates.controller_hz, "hello.rates.controller_hz"),
      physics_dt: asNumber(rates.physics_dt, "hello.rates.physics_dt"),
    },
  };
}

function parseState(p: Record<string, unknown>): StatePayload {
  const mode = asString(p.mode, "state.mode");
  if (!(MODES as readonly string[]).includes(mode)) fail(`unknown mode ${JSON.stringify(mode)}`);
  const rawDetections = p.detections;
  if (!Array.isArray(rawDetections)) fail("state.detections is not an array");
  const detections = rawDetections.map((d, i) => {
    const o = asObject(d, `detections[${i}]`);
    return {
      sensor: asString(o.sensor, `detections[${i}].sensor`),
      point: asVec3(o.point, `detections[${i}].point`),
    };
  });
  const eb = asObject(p.ebrake, "state.ebrake");
  const lcs = p.last_command_seq;
  if (lcs !== null && !isFiniteNumber(lcs)) fail("state.last_command_seq is not a number or null");
  return {
    position: asVec3(p.position, "state.position"),
    velocity: asVec3(p.velocity, "state.velocity"),
    yaw: asNumber(p.yaw, "state.yaw"),
    v_u: asVec3(p.v_u, "state.v_u"),
    v_out: asVec3(p.v_out, "state.v_out"),
    mode: mode as Mode,
    detections,
    ebrake: {
      apex: asVec3(eb.apex, "ebrake.apex"),
      axis: eb.axis === null ? null : asVec3(eb.axis, "ebrake.axis"),
      l_h: asNumber(eb.l_h, "ebrake.l_h"),
      alpha_rad: asNumber(eb.alpha_rad, "ebrake.alpha_rad"),
    },
    r_a: asNumber(p.r_a, "state.r_a"),
    r_s: asNumber(p.r_s, "state.r_s"),
    last_command_seq: lcs === null ? null : (lcs as number),
    paused: asBoolean(p.paused, "state.paused"),
    collided: asBoolean(p.collided, "state.collided"),
  };
}

/** Parse one inbound text frame; throws ProtocolError on anything malformed. */
export function parseServerFrame(text: string): ServerFrame {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    fail("frame is not valid JSON");
  }
  const frame = asObject(raw, "frame");
  const kind = asString(frame.kind, "frame.kind");
  const seq = asNumber(frame.seq, "frame.seq");
  const t = asNumber(frame.t, "frame.t");
  const payload = asObject(frame.payload, "frame.payload");
  if (kind === "hello") return { kind, seq, t, payload: parseHello(payload) };
  if (kind === "state") return { kind, seq, t, payload: parseState(payload) };
  if (kind === "error") return { kind, seq, t, payload: { message: asString(payload.message, "error.message") } };
  fail(`unknown frame kind ${JSON.stringify(kind)}`);
}

/** null when the server speaks our protocol, else a banner message. */
export function versionMismatch(hello: HelloPayload): string | null {
  if (hello.protocol === PROTOCOL_VERSION) return null;
  return `server speaks protocol ${hello.protocol}, this cockpit speaks ${PROTOCOL_VERSION}`;
}

export function commandFrame(seq: number, t: number, v_u: Vec3): string {
  return JSON.stringify({ kind: "command", seq, t, payload: { v_u } });
}

export function controlFrame(
  seq: number,
  t: number,
  op: string,
  extra: Record<string, unknown> = {},
): string {
  return JSON.stringify({ kind: "control", seq, t, payload: { op, ...extra } });
}
