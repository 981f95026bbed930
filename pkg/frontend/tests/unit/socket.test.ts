import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ServerFrame } from "../../src/protocol.js";
import { COMMAND_BUFFER_MS, CockpitSocket, SocketStatus } from "../../src/socket.js";
import { FakeWsFactory, helloFrame, stateFrame } from "../helpers/fake-socket.js";

function makeSocket(factory: FakeWsFactory) {
  const frames: ServerFrame[] = [];
  const statuses: { status: SocketStatus; banner: string | null }[] = [];
  const socket = new CockpitSocket("ws://test", factory.make, {
    onFrame: (f) => frames.push(f),
    onStatus: (status, banner) => statuses.push({ status, banner }),
  });
  return { socket, frames, statuses };
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("handshake", () => {
  it("stays connecting until hello, then reports connected", () => {
    const factory = new FakeWsFactory();
    const { socket, frames } = makeSocket(factory);
    socket.connect();
    expect(socket.status).toBe("connecting");
    const ws = factory.latest();
    ws.open();
    expect(socket.status).toBe("connecting");
    ws.deliver(stateFrame(0, 0.0)); // pre-hello state is ignored
    expect(frames).toHaveLength(0);
    ws.deliver(helloFrame(1));
    expect(socket.status).toBe("connected");
    expect(socket.hello?.scenario.name).toBe("empty");
    expect(frames.map((f) => f.kind)).toEqual(["hello"]);
  });

  it("treats a protocol version mismatch as terminal with a banner", () => {
    const factory = new FakeWsFactory();
    const { socket, statuses } = makeSocket(factory);
    socket.connect();
    const ws = factory.latest();
    ws.open();
    ws.deliver(helloFrame(0, "2"));
    expect(socket.status).toBe("version-mismatch");
    expect(socket.banner).toMatch(/protocol 2/);
    expect(ws.closed).toBe(true);
    // no silent degradation: no reconnect attempts, ever
    vi.advanceTimersByTime(30_000);
    expect(factory.created).toHaveLength(1);
    expect(statuses[statuses.length - 1]!.status).toBe("version-mismatch");
  });
});

describe("reconnect", () => {
  it("reconnects with growing backoff and recovers within 5 s of a restart", () => {
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    socket.connect();
    factory.latest().open();
    factory.latest().deliver(helloFrame(0));
    expect(socket.status).toBe("connected");

    // server goes away; three failed attempts, then it is back
    factory.latest().dropFromServer();
    expect(socket.status).toBe("reconnecting");
    vi.advanceTimersByTime(250);
    expect(factory.created).toHaveLength(2);
    factory.latest().dropFromServer();
    vi.advanceTimersByTime(500);
    expect(factory.created).toHaveLength(3);
    factory.latest().dropFromServer();
    vi.advanceTimersByTime(1000);
    expect(factory.created).toHaveLength(4);
    // total downtime so far: 1.75 s, comfortably within 5 s
    factory.latest().open();
    factory.latest().deliver(helloFrame(0));
    expect(socket.status).toBe("connected");

    // backoff resets after a successful handshake
    factory.latest().dropFromServer();
    vi.advanceTimersByTime(250);
    expect(factory.created).toHaveLength(5);
  });

  it("keeps trying when the constructor itself throws", () => {
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    factory.failNext = true;
    socket.connect();
    expect(factory.created).toHaveLength(0);
    vi.advanceTimersByTime(250);
    expect(factory.created).toHaveLength(1);
  });

  it("close() is final", () => {
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    socket.connect();
    factory.latest().open();
    factory.latest().deliver(helloFrame(0));
    socket.close();
    expect(socket.status).toBe("closed");
    expect(factory.latest().closed).toBe(true);
    vi.advanceTimersByTime(30_000);
    expect(factory.created).toHaveLength(1);
    expect(socket.sendCommand([1, 0, 0])).toBeNull();
  });
});

describe("outbound commands", () => {
  it("numbers commands per connection and stamps the latest server t", () => {
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    socket.connect();
    const ws = factory.latest();
    ws.open();
    ws.deliver(helloFrame(0));
    ws.deliver(stateFrame(1, 0.7));
    expect(socket.sendCommand([1, 0, 0])).toBe(0);
    expect(socket.sendCommand([2, 0, 0])).toBe(1);
    const sent = ws.sent.map((s) => JSON.parse(s));
    expect(sent.map((f) => f.seq)).toEqual([0, 1]);
    expect(sent[1].t).toBe(0.7);
    expect(sent[1].payload.v_u).toEqual([2, 0, 0]);
  });

  it("buffers commands across a drop for at most 0.2 s", () => {
    expect(COMMAND_BUFFER_MS).toBe(200); // the timeline below counts on it
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    socket.connect();
    factory.latest().open();
    factory.latest().deliver(helloFrame(0));
    factory.latest().dropFromServer();

    expect(socket.sendCommand([9, 9, 9])).toBeNull(); // will age out
    vi.advanceTimersByTime(150);
    expect(socket.sendCommand([1, 0, 0])).toBeNull(); // survives
    // the 250 ms reconnect fires during this advance; the first command is
    // then 250 ms old (> COMMAND_BUFFER_MS), the second 100 ms
    vi.advanceTimersByTime(100);
    const ws2 = factory.latest();
    expect(ws2).not.toBe(factory.created[0]);
    ws2.open();
    ws2.deliver(helloFrame(0));
    const sentCommands = ws2.sent.map((s) => JSON.parse(s)).filter((f) => f.kind === "command");
    expect(sentCommands).toHaveLength(1);
    expect(sentCommands[0].payload.v_u).toEqual([1, 0, 0]);
    expect(sentCommands[0].seq).toBe(0); // fresh connection, fresh numbering
  });

  it("sends controls only while connected", () => {
    const factory = new FakeWsFactory();
    const { socket } = makeSocket(factory);
    socket.connect();
    const ws = factory.latest();
    expect(socket.sendControl("pause")).toBe(false);
    ws.open();
    ws.deliver(helloFrame(0));
    expect(socket.sendControl("set_seed", { seed: 7 })).toBe(true);
    const last = JSON.parse(ws.sent[ws.sent.length - 1]!);
    expect(last.kind).toBe("control");
    expect(last.payload).toEqual({ op: "set_seed", seed: 7 });
  });
});

describe("inbound robustness", () => {
  it("counts malformed frames and non-increasing seq without dying", () => {
    const factory = new FakeWsFactory();
    const { socket, frames } = makeSocket(factory);
    socket.connect();
    const ws = factory.latest();
    ws.open();
    ws.deliver(helloFrame(5));
    ws.deliver("{nonsense");
    expect(socket.protocolErrors).toBe(1);
    ws.deliver(stateFrame(5, 0.1)); // seq must strictly increase past hello's 5
    expect(socket.protocolErrors).toBe(2);
    ws.deliver(stateFrame(6, 0.1));
    expect(frames.map((f) => f.kind)).toEqual(["hello", "state"]);
  });

  it("absorbs a mid-session hello as a scenario swap", () => {
    const factory = new FakeWsFactory();
    const { socket, frames } = makeSocket(factory);
    socket.connect();
    const ws = factory.latest();
    ws.open();
    ws.deliver(helloFrame(0));
    ws.deliver(helloFrame(1, "1", "thin_wire"));
    expect(socket.status).toBe("connected");
    expect(socket.hello?.scenario.name).toBe("thin_wire");
    expect(frames).toHaveLength(2);
  });
});
