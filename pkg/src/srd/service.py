"""Live telemetry and pilot-command service over a single WebSocket endpoint.

Wraps the simulation engine in two asyncio tasks: a wall-clock-paced
simulation loop that is the sole owner of mutable state, and a broadcast
loop that publishes the freshest state at a fixed rate, dropping frames
rather than warping physics when consumers lag. Pilot commands are queued
and take effect only at controller ticks, so a served session can be
replayed headlessly tick-for-tick from its applied-command record.

Protocol (JSON text frames, version "1"):
  every frame: {"kind", "seq", "t", "payload"}; seq strictly increasing
  per direction per connection.
  server -> client: hello (protocol version, scenario geometry, limits),
  state (pose, velocities, mode, detections, e-brake cone, spheres),
  error (message; connection stays open).
  client -> server: command {"v_u": [x,y,z]} (clamped to the hard speed
  limit), control {"op": pause|resume|reset|set_seed|load_scenario, ...}.
"""

from __future__ import annotations

import asyncio
import dataclasses
import errno
import json
import logging
import math
from collections import deque
from typing import Any

import websockets
import websockets.exceptions

from . import sim, world
from .avoid import braking_horizon
from .geom import Pose, Vec3, clamp_magnitude

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"
DEFAULT_RATE_HZ = 20.0
DEFAULT_PORT = 8765

_CONTROL_OPS = ("pause", "resume", "reset", "set_seed", "load_scenario")


class ServiceError(Exception):
    """Startup failure that should abort the process (e.g. port in use)."""


def _vec(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _parse_vec(obj: Any, name: str) -> Vec3:
    if (
        not isinstance(obj, (list, tuple))
        or len(obj) != 3
        or not all(isinstance(c, (int, float)) and math.isfinite(c) for c in obj)
    ):
        raise ValueError(f"{name} must be a list of 3 finite numbers")
    return Vec3(float(obj[0]), float(obj[1]), float(obj[2]))


class _Client:
    """Per-connection bookkeeping: outbound counter, inbound watermark."""

    __slots__ = ("socket", "out_seq", "last_in_seq")

    def __init__(self, socket) -> None:
        self.socket = socket
        self.out_seq = 0
        self.last_in_seq: int | None = None


class SimService:
    """Shared state between the simulation loop and connection handlers."""

    def __init__(
        self,
        scenario: world.Scenario,
        cfg: sim.SimConfig | None = None,
        rate_hz: float = DEFAULT_RATE_HZ,
    ) -> None:
        if not (0.0 < rate_hz <= 200.0):
            raise ValueError("broadcast rate must be in (0, 200] Hz")
        self.engine = sim.Engine(scenario, cfg=cfg)
        self.rate_hz = rate_hz
        self.paused = False
        self._clients: dict[Any, _Client] = {}
        self._pending_command: tuple[int, Vec3] | None = None
        self._controls: deque[dict] = deque()
        self._reanchor = True
        self.last_command_seq: int | None = None

    # -- payload builders ----------------------------------------------------

    def hello_payload(self) -> dict:
        sc = self.engine.scenario
        cfg = self.engine.cfg
        p = self.engine.params
        return {
            "protocol": PROTOCOL_VERSION,
            "scenario": {
                "name": sc.name,
                "duration_s": sc.duration_s,
                "conductors": [
                    {
                        "a": _vec(c.geometry.a),
                        "b": _vec(c.geometry.b),
                        "diameter_mm": c.diameter_mm,
                        "detectability": c.detectability,
                    }
                    for c in sc.conductors
                ],
                "uav_start": _vec(sc.uav_start),
            },
            "limits": {
                "v_max_hard": cfg.v_max_hard,
                "r_a": p.r_a,
                "r_s": p.r_s,
                "v_eb": p.v_eb,
                "alpha_rad": p.alpha,
            },
            "rates": {
                "broadcast_hz": self.rate_hz,
                "controller_hz": cfg.controller_rate_hz,
                "physics_dt": cfg.physics_dt,
            },
        }

    def state_payload(self) -> dict:
        eng = self.engine
        p = eng.params
        state = eng.state
        if eng.samples:
            latest = eng.samples[-1]
            v_u, v_out, mode = latest.v_u, latest.v_out, latest.mode.value
            det_pose = Pose(latest.state.position, latest.state.yaw)
            detections = [
                {"sensor": d.sensor_id.value, "point": _vec(det_pose.point_to_world(d.point))}
                for d in latest.detections
            ]
        else:
            v_u = eng._desired_at(state.t)
            v_out = eng.v_cmd_world
            mode = eng.ctrl_state.mode.value
            detections = []
        speed = state.velocity.norm()
        axis = _vec(state.velocity / speed) if speed > 1e-9 else None
        return {
            "position": _vec(state.position),
            "velocity": _vec(state.velocity),
            "yaw": state.yaw,
            "v_u": _vec(v_u),
            "v_out": _vec(v_out),
            "mode": mode,
            "detections": detections,
            "ebrake": {
                "apex": _vec(state.position),
                "axis": axis,
                "l_h": braking_horizon(state.velocity, p),
                "alpha_rad": p.alpha,
            },
            "r_a": p.r_a,
            "r_s": p.r_s,
            "last_command_seq": self.last_command_seq,
            "paused": self.paused,
            "collided": eng.collided,
        }

    # -- outbound ------------------------------------------------------------

    async def _send(self, client: _Client, kind: str, payload: dict) -> None:
        frame = {
            "kind": kind,
            "seq": client.out_seq,
            "t": self.engine.state.t,
            "payload": payload,
        }
        client.out_seq += 1
        await client.socket.send(json.dumps(frame, separators=(",", ":")))

    async def _broadcast(self, kind: str, payload: dict) -> None:
        for client in list(self._clients.values()):
            try:
                await self._send(client, kind, payload)
            except websockets.exceptions.ConnectionClosed:
                self._clients.pop(client.socket, None)

    # -- inbound -------------------------------------------------------------

    async def handler(self, socket) -> None:
        client = _Client(socket)
        self._clients[socket] = client
        try:
            await self._send(client, "hello", self.hello_payload())
            async for raw in socket:
                try:
                    self._handle_frame(client, raw)
                except ValueError as exc:
                    await self._send(client, "error", {"message": str(exc)})
        except websockets.exceptions.ConnectionClosed:
            pass
        finally:
            self._clients.pop(socket, None)

    def _handle_frame(self, client: _Client, raw: str | bytes) -> None:
        try:
            frame = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"not valid JSON: {exc}") from exc
        if not isinstance(frame, dict):
            raise ValueError("frame must be a JSON object")
        kind = frame.get("kind")
        seq = frame.get("seq")
        payload = frame.get("payload")
        if not isinstance(seq, int):
            raise ValueError("frame needs an integer seq")
        if client.last_in_seq is not None and seq <= client.last_in_seq:
            raise ValueError(
                f"seq must increase: got {seq} after {client.last_in_seq}"
            )
        client.last_in_seq = seq
        if not isinstance(payload, dict):
            raise ValueError("frame needs an object payload")
        if kind == "command":
            v_u = _parse_vec(payload.get("v_u"), "v_u")
            v_u = clamp_magnitude(v_u, self.engine.cfg.v_max_hard)
            self._pending_command = (seq, v_u)  # latest wins
        elif kind == "control":
            op = payload.get("op")
            if op not in _CONTROL_OPS:
                raise ValueError(f"unknown control op: {op!r}")
            if op == "set_seed" and not isinstance(payload.get("seed"), int):
                raise ValueError("set_seed needs an integer seed")
            if op == "load_scenario" and not isinstance(payload.get("scenario"), str):
                raise ValueError("load_scenario needs a scenario name or path")
            self._controls.append(payload)
        else:
            raise ValueError(f"unknown frame kind: {kind!r}")

    # -- control application (simulation loop only) ---------------------------

    def _clear_pilot_state(self) -> None:
        self._pending_command = None
        self.engine.set_desired_override(None)
        self.last_command_seq = None

    def _apply_controls(self) -> bool:
        hello_dirty = False
        while self._controls:
            ctl = self._controls.popleft()
            op = ctl["op"]
            log.info("control: %s", op)
            if op == "pause":
                self.paused = True
            elif op == "resume":
                self.paused = False
                self._reanchor = True
            elif op == "reset":
                self.engine.reset()
                self._clear_pilot_state()
                self._reanchor = True
            elif op == "set_seed":
                self.engine.reset(seed=ctl["seed"])
                self._clear_pilot_state()
                self._reanchor = True
            elif op == "load_scenario":
                try:
                    scenario = load_scenario_ref(ctl["scenario"])
                except (world.ScenarioError, OSError) as exc:
                    log.warning("load_scenario failed: %s", exc)
                    continue
                self.engine = sim.Engine(scenario, cfg=self.engine.cfg)
                self._clear_pilot_state()
                self._reanchor = True
                hello_dirty = True
        return hello_dirty

    # -- tasks ---------------------------------------------------------------

    async def sim_loop(self) -> None:
        loop = asyncio.get_running_loop()
        anchor_wall = loop.time()
        anchor_sim = self.engine.state.t
        while True:
            if self._apply_controls():
                await self._broadcast("hello", self.hello_payload())
            if self._reanchor:
                anchor_wall = loop.time()
                anchor_sim = self.engine.state.t
                self._reanchor = False
            if self.paused:
                await asyncio.sleep(0.05)
                continue
            eng = self.engine
            if (
                self._pending_command is not None
                and eng.step_index % eng.cfg.steps_per_controller_tick() == 0
            ):
                seq, v_u = self._pending_command
                self._pending_command = None
                eng.set_desired_override(v_u)
                self.last_command_seq = seq
            eng.advance()
            target = anchor_wall + (eng.state.t - anchor_sim)
            now = loop.time()
            if target > now:
                await asyncio.sleep(target - now)
            elif now - target > 0.25:
                # fell behind (slow host): drop the debt instead of warping
                anchor_wall = now
                anchor_sim = eng.state.t

    async def broadcast_loop(self) -> None:
        period = 1.0 / self.rate_hz
        while True:
            await asyncio.sleep(period)
            if self._clients:
                await self._broadcast("state", self.state_payload())


def load_scenario_ref(ref: str) -> world.Scenario:
    """Scenario from either a `builtin:<name>` reference or a file path."""
    if ref.startswith("builtin:"):
        return world.builtin_scenario(ref[len("builtin:") :])
    return world.load_scenario_file(ref)


def replay_scenario(engine: sim.Engine) -> world.Scenario:
    """Headless-replay scenario for a served session.

    The applied desired-velocity record (one entry per controller tick)
    becomes a zero-order-hold script, so `sim.run` with the same seed
    reproduces the served v_out sequence tick for tick.
    """
    if not engine.applied_desired:
        raise ValueError("engine has no applied commands to replay")
    return dataclasses.replace(
        engine.scenario,
        desired=world.ScriptedDesired(tuple(engine.applied_desired)),
        duration_s=engine.state.t,
        assertions=None,
    )


async def run_service(
    service: SimService,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    ready: asyncio.Event | None = None,
) -> None:
    """Serve until cancelled. Raises ServiceError if the port is taken."""
    try:
        server = await websockets.serve(service.handler, host, port)
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise ServiceError(f"port {port} is already in use") from exc
        raise ServiceError(str(exc)) from exc
    tasks = [
        asyncio.create_task(service.sim_loop(), name="sim-loop"),
        asyncio.create_task(service.broadcast_loop(), name="broadcast"),
    ]
    log.info("serving ws://%s:%d (scenario %s)", host, port, service.engine.scenario.name)
    if ready is not None:
        ready.set()
    try:
        await asyncio.gather(*tasks)
    finally:
        for task in tasks:
            task.cancel()
        server.close()
        await server.wait_closed()


def serve_forever(
    scenario: world.Scenario,
    cfg: sim.SimConfig | None = None,
    host: str = "127.0.0.1",
    port: int = DEFAULT_PORT,
    rate_hz: float = DEFAULT_RATE_HZ,
) -> None:
    service = SimService(scenario, cfg=cfg, rate_hz=rate_hz)
    asyncio.run(run_service(service, host=host, port=port))
