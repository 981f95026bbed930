#!/usr/bin/env python3
"""Live-vs-replay equality harness for the cockpit round-trip test.

Starts the WebSocket piloting service on a given port, waits for one
client to connect, lets it fly for a fixed wall-clock window, then stops
the service and replays the recorded applied-command sequence headlessly
with the same seed. The run passes when every controller tick of the
live session (t, v_u, v_out, position, mode) is reproduced exactly and
at least one pilot command was actually applied.

Emits JSON lines on stdout so a test runner can drive it:
  {"event": "ready", "port": N}    service is accepting connections
  {"event": "result", "ok": ...}   verdict after the window closes
"""

import argparse
import asyncio
import contextlib
import json
import sys

from srd import service as srd_service
from srd import sim


def _vec(v) -> list:
    return [v.x, v.y, v.z]


def _tick_diff(live, replay) -> str | None:
    """First divergence between two sample lists, or None."""
    if len(live) != len(replay):
        return f"tick count differs: live {len(live)} vs replay {len(replay)}"
    for a, b in zip(live, replay):
        if a.t != b.t:
            return f"t differs at tick: {a.t} vs {b.t}"
        if _vec(a.v_u) != _vec(b.v_u):
            return f"v_u differs at t={a.t}: {_vec(a.v_u)} vs {_vec(b.v_u)}"
        if _vec(a.v_out) != _vec(b.v_out):
            return f"v_out differs at t={a.t}: {_vec(a.v_out)} vs {_vec(b.v_out)}"
        if _vec(a.state.position) != _vec(b.state.position):
            return f"position differs at t={a.t}"
        if a.mode != b.mode:
            return f"mode differs at t={a.t}: {a.mode.value} vs {b.mode.value}"
    return None


async def amain(args: argparse.Namespace) -> int:
    scenario = srd_service.load_scenario_ref(args.scenario)
    service = srd_service.SimService(
        scenario, cfg=sim.SimConfig(seed=args.seed), rate_hz=args.rate
    )
    ready = asyncio.Event()
    server_task = asyncio.create_task(
        srd_service.run_service(service, host="127.0.0.1", port=args.port, ready=ready)
    )
    await asyncio.wait_for(ready.wait(), timeout=10.0)
    print(json.dumps({"event": "ready", "port": args.port}), flush=True)

    loop = asyncio.get_running_loop()
    deadline = loop.time() + args.client_timeout
    while not service._clients:
        if loop.time() > deadline:
            print(
                json.dumps(
                    {"event": "result", "ok": False, "reason": "no client connected"}
                ),
                flush=True,
            )
            server_task.cancel()
            return 1
        await asyncio.sleep(0.05)

    await asyncio.sleep(args.run_seconds)

    server_task.cancel()
    with contextlib.suppress(asyncio.CancelledError, asyncio.TimeoutError):
        await asyncio.wait_for(server_task, timeout=10.0)

    live = service.engine
    replay = sim.run(srd_service.replay_scenario(live), cfg=live.cfg)
    diff = _tick_diff(live.samples, replay.samples)
    commanded = service.last_command_seq
    ok = diff is None and commanded is not None
    result = {
        "event": "result",
        "ok": ok,
        "ticks": len(live.samples),
        "commanded_seq": commanded,
        "diff": diff,
    }
    print(json.dumps(result), flush=True)
    return 0 if ok else 1


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--port", type=int, required=True)
    ap.add_argument("--scenario", default="builtin:triangle_3phase")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--rate", type=float, default=30.0, help="broadcast Hz")
    ap.add_argument(
        "--run-seconds", type=float, default=3.0, help="flight window after connect"
    )
    ap.add_argument(
        "--client-timeout", type=float, default=20.0, help="wait for a client, s"
    )
    return asyncio.run(amain(ap.parse_args()))


if __name__ == "__main__":
    sys.exit(main())
