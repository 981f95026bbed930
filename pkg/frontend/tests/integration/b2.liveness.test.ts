/**
 * Liveness check against the stock CLI server: the full cockpit pipeline
 * (socket -> store -> renderer, keyboard pilot driving the approach)
 * must paint at least 10 distinct state frames per second and visibly
 * walk the cruise -> ebraking -> tangential mode chain while flying at
 * the wire corridor at 10 m/s.
 */

import { afterEach, expect, it } from "vitest";
import WS from "ws";

import { KeyboardPilot } from "../../src/input.js";
import { render } from "../../src/render.js";
import { CockpitSocket, WsLike } from "../../src/socket.js";
import { CockpitStore } from "../../src/store.js";
import { FakeCtx } from "../helpers/fake-canvas.js";
import { ChildHandle, sleep, spawnProc, testPort, waitFor } from "../helpers/proc.js";

const MODE_TEXT = /^(CRUISE|TANGENTIAL|EBRAKING|REJECTING)$/;

let handle: ChildHandle | null = null;
let socket: CockpitSocket | null = null;
let pilot: KeyboardPilot | null = null;

afterEach(() => {
  pilot?.stop();
  socket?.close();
  if (handle && handle.child.exitCode === null) handle.child.kill("SIGTERM");
});

function hasTransition(modes: string[], from: string, to: string): boolean {
  return modes.some((m, i) => m === from && modes[i + 1] === to);
}

it("renders >=10 state frames/s and shows cruise -> ebraking -> tangential", async () => {
  const port = testPort();
  handle = spawnProc("python3", [
    "-m",
    "srd.cli",
    "serve",
    "--scenario",
    "builtin:triangle_3phase",
    "--port",
    String(port),
    "--rate",
    "30",
    "--seed",
    "1",
  ]);

  const store = new CockpitStore();
  socket = new CockpitSocket(
    `ws://127.0.0.1:${port}`,
    (url) => new WS(url) as unknown as WsLike,
    {
      onFrame: (frame, nowMs) => store.applyFrame(frame, nowMs),
      onStatus: (status, banner) => store.setStatus(status, banner),
    },
  );
  // the server takes a moment to come up; the socket's own reconnect
  // backoff is what finds it, same as a browser opened too early
  socket.connect();
  await waitFor(
    () => (socket!.connected ? true : undefined),
    20_000,
    "hello handshake",
    () => handle!.stderr,
  );

  pilot = new KeyboardPilot((v_u) => {
    store.setPilot(v_u);
    const seq = socket!.sendCommand(v_u);
    if (seq !== null) store.setPilotSentSeq(seq);
  });
  pilot.setSpeed(10);
  pilot.keydown({ key: "w" }); // hold forward: 10 m/s approach
  pilot.start(50);

  await waitFor(() => (store.stateSeq !== null ? true : undefined), 10_000, "first state frame");

  const ctx = new FakeCtx();
  const displayed: string[] = [];
  let framesRendered = 0;
  let lastSeq: number | null = null;
  const t0 = Date.now();
  const windowMs = 9_000;
  while (Date.now() - t0 < windowMs) {
    const now = Date.now();
    const snap = store.snapshot(now);
    if (snap.state !== null && snap.stateSeq !== lastSeq) {
      lastSeq = snap.stateSeq;
      ctx.reset();
      render(ctx, 1080, 560, snap, now);
      store.noteRenderedFrame(now);
      framesRendered += 1;
      const mode = ctx.texts().find((t) => MODE_TEXT.test(t));
      if (mode !== undefined) {
        const lower = mode.toLowerCase();
        if (displayed[displayed.length - 1] !== lower) displayed.push(lower);
      }
    }
    await sleep(10);
  }
  const elapsedS = (Date.now() - t0) / 1000;
  const fps = framesRendered / elapsedS;

  expect(fps, `rendered ${framesRendered} frames in ${elapsedS.toFixed(1)} s`).toBeGreaterThanOrEqual(10);
  expect(displayed[0]).toBe("cruise");
  expect(
    hasTransition(displayed, "cruise", "ebraking"),
    `mode chain: ${displayed.join(" -> ")}`,
  ).toBe(true);
  expect(
    hasTransition(displayed, "ebraking", "tangential"),
    `mode chain: ${displayed.join(" -> ")}`,
  ).toBe(true);
  expect(store.state?.collided).toBe(false);
  // the pilot's commands were acknowledged by the server
  expect(store.state?.last_command_seq).not.toBeNull();
});
