/**
 * Browser wiring: DOM, real WebSocket, keyboard listeners, RAF loop.
 * Everything testable lives in the other modules; this file only
 * connects them to the page.
 *
 * Server URL: ws://<page-host>:8765 by default, overridable with
 * ?ws=ws://host:port.
 */

import { KeyboardPilot } from "./input.js";
import { render } from "./render.js";
import { CockpitSocket, WsLike } from "./socket.js";
import { CockpitStore } from "./store.js";

function wsUrl(): string {
  const param = new URLSearchParams(window.location.search).get("ws");
  if (param) return param;
  const host = window.location.hostname || "127.0.0.1";
  return `ws://${host}:8765`;
}

function main(): void {
  const canvas = document.getElementById("cockpit") as HTMLCanvasElement;
  const slider = document.getElementById("speed") as HTMLInputElement;
  const speedLabel = document.getElementById("speed-label") as HTMLElement;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");

  const store = new CockpitStore();
  const socket = new CockpitSocket(
    wsUrl(),
    (url) => new WebSocket(url) as unknown as WsLike,
    {
      onFrame: (frame, nowMs) => store.applyFrame(frame, nowMs),
      onStatus: (status, banner) => store.setStatus(status, banner),
    },
  );

  const pilot = new KeyboardPilot((v_u) => {
    store.setPilot(v_u);
    const seq = socket.sendCommand(v_u);
    if (seq !== null) store.setPilotSentSeq(seq);
  });

  const applySpeed = () => {
    const speed = Number(slider.value);
    pilot.setSpeed(speed);
    store.setSpeed(speed);
    speedLabel.textContent = `${speed.toFixed(1)} m/s`;
  };
  slider.addEventListener("input", applySpeed);
  applySpeed();

  window.addEventListener("keydown", (ev) => {
    if (ev.repeat) return;
    if (ev.key === "[") store.setZoom(store.zoom * 1.25);
    else if (ev.key === "]") store.setZoom(store.zoom / 1.25);
    else if (ev.key === "p") socket.sendControl("pause");
    else if (ev.key === "o") socket.sendControl("resume");
    else if (ev.key === "0") socket.sendControl("reset");
    else pilot.keydown(ev);
  });
  window.addEventListener("keyup", (ev) => pilot.keyup(ev));
  // keyup events are lost when the tab blurs; hover rather than fly blind
  window.addEventListener("blur", () => pilot.releaseAll());

  socket.connect();
  pilot.start();

  const frame = () => {
    const nowMs = Date.now();
    render(ctx, canvas.width, canvas.height, store.snapshot(nowMs), nowMs);
    store.noteRenderedFrame(nowMs);
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

main();
