import { describe, expect, it } from "vitest";

import { StatePayload, parseServerFrame } from "../../src/protocol.js";
import {
  CONE_HIGHLIGHT_FILL,
  MODE_COLORS,
  RS_FLASH_FILL,
  SENSOR_COLORS,
  STALE_COLOR,
  V_OUT_COLOR,
  V_U_COLOR,
  render,
} from "../../src/render.js";
import { Snapshot } from "../../src/store.js";
import { FakeCtx } from "../helpers/fake-canvas.js";
import { helloFrame, stateFrame } from "../helpers/fake-socket.js";

const W = 1080;
const H = 560;

function statePayload(over: Record<string, unknown> = {}): StatePayload {
  const frame = parseServerFrame(JSON.stringify(stateFrame(1, 1.0, over)));
  if (frame.kind !== "state") throw new Error("expected state");
  return frame.payload;
}

function helloPayload() {
  const raw = helloFrame(0) as { payload: { scenario: { conductors: unknown[] } } };
  raw.payload.scenario.conductors = [
    { a: [0, -17.5, 10], b: [0, 17.5, 10], diameter_mm: 20, detectability: 1.0 },
  ];
  const frame = parseServerFrame(JSON.stringify(raw));
  if (frame.kind !== "hello") throw new Error("expected hello");
  return frame.payload;
}

function makeSnapshot(over: Partial<Snapshot> = {}): Snapshot {
  return {
    hello: helloPayload(),
    state: statePayload(),
    stateT: 1.0,
    stateSeq: 1,
    status: "connected",
    banner: null,
    sinceStateMs: 50,
    stale: false,
    trail: [],
    pilot: { v_u: [0, 0, 0], speed: 5, lastSentSeq: null },
    fps: 30,
    zoom: 16,
    ...over,
  };
}

function draw(snap: Snapshot, nowMs = 1000): FakeCtx {
  const ctx = new FakeCtx();
  render(ctx, W, H, snap, nowMs);
  return ctx;
}

describe("mode display", () => {
  it.each(["cruise", "tangential", "ebraking", "rejecting"] as const)(
    "shows %s prominently in its color",
    (mode) => {
      const ctx = draw(makeSnapshot({ state: statePayload({ mode }) }));
      const op = ctx.textOps().find((o) => o.text === mode.toUpperCase());
      expect(op).toBeDefined();
      expect(op!.fillStyle).toBe(MODE_COLORS[mode]);
    },
  );

  it("renders a placeholder before the first state frame", () => {
    const ctx = draw(makeSnapshot({ state: null, stateSeq: null }));
    expect(ctx.texts()).toContain("NO STATE");
  });
});

describe("e-brake cone", () => {
  const flying = {
    velocity: [10, 0, 0],
    ebrake: { apex: [0, 0, 0], axis: [1, 0, 0], l_h: 12.0, alpha_rad: 0.245 },
  };

  it("fills the cone while ebraking", () => {
    const ctx = draw(makeSnapshot({ state: statePayload({ ...flying, mode: "ebraking" }) }));
    expect(ctx.fillsWith(CONE_HIGHLIGHT_FILL).length).toBeGreaterThan(0);
  });

  it("keeps the cone an outline when not braking", () => {
    const ctx = draw(makeSnapshot({ state: statePayload({ ...flying, mode: "cruise" }) }));
    expect(ctx.fillsWith(CONE_HIGHLIGHT_FILL)).toHaveLength(0);
  });

  it("skips the cone while stationary (no axis)", () => {
    const ctx = draw(
      makeSnapshot({ state: statePayload({ mode: "ebraking", ebrake: { apex: [0, 0, 0], axis: null, l_h: 2.0, alpha_rad: 0.245 } }) }),
    );
    expect(ctx.fillsWith(CONE_HIGHLIGHT_FILL)).toHaveLength(0);
  });
});

describe("safety sphere", () => {
  it("flashes when a detection is inside r_s", () => {
    const inside = statePayload({
      position: [0, 0, 0],
      detections: [{ sensor: "front", point: [1.0, 0, 0] }], // r_s is 1.5
    });
    const ctx = draw(makeSnapshot({ state: inside }));
    expect(ctx.fillsWith(RS_FLASH_FILL).length).toBeGreaterThan(0);
  });

  it("stays quiet when every detection is outside r_s", () => {
    const outside = statePayload({
      position: [0, 0, 0],
      detections: [{ sensor: "front", point: [3.0, 0, 0] }],
    });
    const ctx = draw(makeSnapshot({ state: outside }));
    expect(ctx.fillsWith(RS_FLASH_FILL)).toHaveLength(0);
  });
});

describe("detections", () => {
  it("colors detection points by sensor", () => {
    const st = statePayload({
      detections: [
        { sensor: "front", point: [2, 0, 0] },
        { sensor: "top", point: [0, 0, 2] },
      ],
    });
    const ctx = draw(makeSnapshot({ state: st }));
    // each detection is drawn in both panes
    expect(ctx.fillsWith(SENSOR_COLORS.front!)).toHaveLength(2);
    expect(ctx.fillsWith(SENSOR_COLORS.top!)).toHaveLength(2);
  });

  it("legend names every sensor color", () => {
    const ctx = draw(makeSnapshot());
    const texts = ctx.texts();
    for (const name of Object.keys(SENSOR_COLORS)) {
      expect(texts).toContain(name);
    }
  });
});

describe("velocity arrows", () => {
  it("draws diverging v_u and v_out arrows when the controller intervenes", () => {
    const st = statePayload({ v_u: [10, 0, 0], v_out: [2, 0, 4] });
    const ctx = draw(makeSnapshot({ state: st }));
    const vu = ctx.segmentsWith(V_U_COLOR);
    const vout = ctx.segmentsWith(V_OUT_COLOR);
    expect(vu.length).toBeGreaterThan(0);
    expect(vout.length).toBeGreaterThan(0);
    // same origin, different tip: visibly divergent
    expect(vu[0]!.from).toEqual(vout[0]!.from);
    expect(vu[0]!.to).not.toEqual(vout[0]!.to);
  });

  it("draws matching arrows when the command passes through", () => {
    const st = statePayload({ v_u: [3, 0, 0], v_out: [3, 0, 0] });
    const ctx = draw(makeSnapshot({ state: st }));
    expect(ctx.segmentsWith(V_U_COLOR)[0]!.to).toEqual(ctx.segmentsWith(V_OUT_COLOR)[0]!.to);
  });

  it("prints both magnitudes in the HUD", () => {
    const st = statePayload({ v_u: [10, 0, 0], v_out: [2, 0, 4] });
    const texts = draw(makeSnapshot({ state: st })).texts();
    expect(texts.some((t) => t.startsWith("v_u") && t.includes("|10.0|"))).toBe(true);
    expect(texts.some((t) => t.startsWith("v_out") && t.includes("|4.5|"))).toBe(true);
  });
});

describe("HUD indicators", () => {
  it("shows a stale warning once state stops flowing", () => {
    const ctx = draw(makeSnapshot({ stale: true, sinceStateMs: 1200 }));
    const op = ctx.textOps().find((o) => o.text === "STALE 1.2s");
    expect(op).toBeDefined();
    expect(op!.fillStyle).toBe(STALE_COLOR);
  });

  it("omits the stale warning while fresh", () => {
    const ctx = draw(makeSnapshot());
    expect(ctx.texts().some((t) => t.startsWith("STALE"))).toBe(false);
  });

  it("surfaces the version-mismatch banner", () => {
    const ctx = draw(
      makeSnapshot({
        status: "version-mismatch",
        banner: "server speaks protocol 2, this cockpit speaks 1",
      }),
    );
    expect(ctx.texts()).toContain("server speaks protocol 2, this cockpit speaks 1");
    expect(ctx.texts()).toContain("version-mismatch");
  });

  it("shows paused and collided badges", () => {
    const ctx = draw(makeSnapshot({ state: statePayload({ paused: true, collided: true }) }));
    expect(ctx.texts()).toContain("PAUSED");
    expect(ctx.texts()).toContain("COLLIDED");
  });

  it("shows the round-trip command ack", () => {
    const st = statePayload({ last_command_seq: 6 });
    const ctx = draw(
      makeSnapshot({ state: st, pilot: { v_u: [1, 0, 0], speed: 5, lastSentSeq: 6 } }),
    );
    expect(ctx.texts().some((t) => t.includes("cmd #6 ack #6"))).toBe(true);
  });
});

describe("world geometry", () => {
  it("draws each conductor in both panes", () => {
    const ctx = draw(makeSnapshot());
    expect(ctx.segmentsWith("#8fa3b8")).toHaveLength(2); // 1 conductor x 2 panes
  });

  it("draws the trail as a polyline", () => {
    const trail: [number, number, number][] = [
      [0, 0, 10],
      [1, 0, 10],
      [2, 0.5, 10],
    ];
    const ctx = draw(makeSnapshot({ trail }));
    const trailStrokes = ctx.strokesWith("rgba(120, 180, 255, 0.45)");
    expect(trailStrokes).toHaveLength(2);
    expect(trailStrokes[0]!.path).toHaveLength(3);
  });

  it("renders without a hello (no scenario yet)", () => {
    const ctx = draw(makeSnapshot({ hello: null, state: null, stateSeq: null }));
    expect(ctx.texts()).toContain("NO STATE");
  });
});
