import { describe, expect, it } from "vitest";

import type { FrameStats } from "../src/client.js";
import type { ErrorMessage, Frame, RenderRequest } from "../src/protocol.js";
import { MAX_ELEVATION } from "../src/orbit.js";
import { DEBOUNCE_MS, RECONNECT_DELAY_MS, Viewer, type ViewerStatus } from "../src/viewer.js";
import { FakeClock, MockService, DEFAULT_INFO } from "./mock_service.js";

function makeViewer(info: Partial<typeof DEFAULT_INFO> = {}) {
  const mock = new MockService(info);
  const clock = new FakeClock();
  const frames: { frame: Frame; stats: FrameStats }[] = [];
  const statuses: ViewerStatus[] = [];
  const errors: ErrorMessage[] = [];
  const viewer = new Viewer({
    socketFactory: mock.factory,
    fetchImpl: mock.fetchImpl(),
    timers: clock,
    onFrame: (frame, stats) => frames.push({ frame, stats }),
    onStatus: (status) => statuses.push(status),
    onError: (error) => errors.push(error),
  });
  return { mock, clock, frames, statuses, errors, viewer };
}

/** Connected viewer with the initial frame already displayed and logs cleared. */
async function connectedViewer(info: Partial<typeof DEFAULT_INFO> = {}) {
  const ctx = makeViewer(info);
  await ctx.viewer.connect("127.0.0.1:9");
  ctx.mock.openPending();
  ctx.mock.pump();
  ctx.frames.length = 0;
  ctx.mock.requests.length = 0;
  return ctx;
}

function lastRequest(mock: MockService): RenderRequest {
  return mock.requests[mock.requests.length - 1];
}

describe("connect", () => {
  it("populates one scaled slider range per expression component", async () => {
    const { viewer } = makeViewer();
    const info = await viewer.connect("127.0.0.1:9");
    expect(info.B).toBe(8);
    expect(viewer.ranges).toHaveLength(8);
    // Component 0 observed [-0.5, 0.5] stretches to [-0.7, 0.7].
    expect(viewer.ranges[0].min).toBeCloseTo(-0.7, 12);
    expect(viewer.ranges[0].max).toBeCloseTo(0.7, 12);
  });

  it("starts from a neutral expression clamped into each observed range", async () => {
    const { viewer } = makeViewer();
    await viewer.connect("127.0.0.1:9");
    // Component 3 was never observed below 0.2, so neutral starts there.
    expect(viewer.state.expr[0]).toBe(0);
    expect(viewer.state.expr[3]).toBe(0.2);
  });

  it("requests a first frame as soon as the stream opens", async () => {
    const { viewer, mock, frames } = makeViewer();
    await viewer.connect("127.0.0.1:9");
    expect(mock.requests).toHaveLength(0);
    mock.openPending();
    expect(mock.requests).toHaveLength(1);
    expect(lastRequest(mock).mode).toBe("color");
    expect(lastRequest(mock).width).toBe(256);
    mock.pump();
    expect(frames).toHaveLength(1);
    expect(viewer.getStatus()).toEqual({ connected: true, reconnecting: false });
  });

  it("surfaces a failed info fetch", async () => {
    const mock = new MockService();
    const viewer = new Viewer({
      socketFactory: mock.factory,
      fetchImpl: async () => ({ ok: false, status: 404, json: async () => ({}) }),
      timers: new FakeClock(),
    });
    await expect(viewer.connect("127.0.0.1:9")).rejects.toThrow(/status 404/);
  });
});

describe("debounced rendering", () => {
  it("collapses a quick run of slider events into one request", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.onSliderChange(0, 0.1);
    viewer.onSliderChange(0, 0.2);
    viewer.onSliderChange(1, 0.4);
    expect(mock.requests).toHaveLength(0);
    clock.advance(DEBOUNCE_MS);
    expect(mock.requests).toHaveLength(1);
    expect(lastRequest(mock).expr[0]).toBe(0.2);
    expect(lastRequest(mock).expr[1]).toBe(0.4);
  });

  it("restarts the quiet period on every event", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.onSliderChange(0, 0.1);
    clock.advance(DEBOUNCE_MS - 6);
    viewer.onSliderChange(0, 0.2);
    clock.advance(DEBOUNCE_MS - 6);
    expect(mock.requests).toHaveLength(0);
    clock.advance(6);
    expect(mock.requests).toHaveLength(1);
    expect(lastRequest(mock).expr[0]).toBe(0.2);
  });

  it("updates state synchronously even while a render is in flight", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.onSliderChange(0, 0.3);
    clock.advance(DEBOUNCE_MS);
    expect(mock.requests).toHaveLength(1);
    // Request 1 unanswered; the controls must not care.
    viewer.onSliderChange(0, 0.6);
    expect(viewer.state.expr[0]).toBe(0.6);
    viewer.onOrbit({ azimuth: 1 });
    expect(viewer.state.orbit.azimuth).toBe(1);
  });

  it("clamps slider values into the stretched range", async () => {
    const { viewer } = await connectedViewer();
    viewer.onSliderChange(0, 99);
    expect(viewer.state.expr[0]).toBeCloseTo(0.7, 12);
  });
});

describe("orbit control", () => {
  it("merges partial updates and clamps the elevation", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.onOrbit({ azimuth: 0.5 });
    viewer.onOrbit({ elevation: 9 });
    expect(viewer.state.orbit.azimuth).toBe(0.5);
    expect(viewer.state.orbit.elevation).toBe(MAX_ELEVATION);
    clock.advance(DEBOUNCE_MS);
    const camera = lastRequest(mock).camera;
    expect(camera.target).toEqual([0, 0, 0]);
    expect(camera.eye[1]).toBeGreaterThan(3);
  });
});

describe("basis explorer", () => {
  it("sends a one-hot expression at the strongest observed value", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.basisExplore(2);
    clock.advance(DEBOUNCE_MS);
    const expr = lastRequest(mock).expr;
    // Component 2 observed [-1, 1]: strongest is 1. The untouched component 3
    // clamps its neutral zero up to the observed minimum.
    expect(expr[2]).toBe(1);
    expect(expr[0]).toBe(0);
    expect(expr[3]).toBe(0.2);
    expect(lastRequest(mock).mode).toBe("color");
  });

  it("prefers the negative bound when it is the stronger one", async () => {
    const { viewer } = await connectedViewer();
    viewer.basisExplore(6); // observed [-0.8, 0.2]
    expect(viewer.state.expr[6]).toBe(-0.8);
  });

  it("accepts a neutral expression and an explicit scale", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    const neutral = [0.1, 0.1, 0.1, 0.3, 0.1, 0.1, 0.1, 0.1];
    viewer.basisExplore(1, { neutral, scale: 0.5 });
    clock.advance(DEBOUNCE_MS);
    const expr = lastRequest(mock).expr;
    expect(expr[1]).toBe(0.5);
    expect(expr[0]).toBe(0.1);
    expect(expr[3]).toBe(0.3);
  });
});

describe("peel and opacity diff", () => {
  it("switches into peel mode with the clamped fraction", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.peelSlider(0.35);
    clock.advance(DEBOUNCE_MS);
    expect(lastRequest(mock).mode).toBe("peel");
    expect(lastRequest(mock).fraction).toBe(0.35);
    mock.pump(); // settle the in-flight request so the next one dispatches
    viewer.peelSlider(7);
    clock.advance(DEBOUNCE_MS);
    expect(lastRequest(mock).fraction).toBe(1);
  });

  it("peel at zero still sends a well-formed request", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.peelSlider(0);
    clock.advance(DEBOUNCE_MS);
    expect(lastRequest(mock).mode).toBe("peel");
    expect(lastRequest(mock).fraction).toBe(0);
  });

  it("snapshots the reference expression for opacity diff", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.onSliderChange(0, 0.25);
    viewer.opacityDiff();
    viewer.onSliderChange(0, 0.6);
    clock.advance(DEBOUNCE_MS);
    const req = lastRequest(mock);
    expect(req.mode).toBe("opacity_diff");
    expect(req.expr[0]).toBe(0.6);
    expect(req.expr_ref![0]).toBe(0.25);
  });

  it("drops mode-specific fields when back in color mode", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    viewer.peelSlider(0.5);
    clock.advance(DEBOUNCE_MS);
    viewer.setMode("color");
    clock.advance(DEBOUNCE_MS);
    mock.pump();
    const req = lastRequest(mock);
    expect(req.mode).toBe("color");
    expect("fraction" in req).toBe(false);
    expect("expr_ref" in req).toBe(false);
  });
});

describe("disconnect and reconnect", () => {
  it("raises the banner, keeps state, and resumes where it left off", async () => {
    const { viewer, mock, clock, statuses, frames } = await connectedViewer();
    viewer.onSliderChange(0, 0.45);
    clock.advance(DEBOUNCE_MS);
    mock.pump();
    mock.sockets[0].dropConnection();
    expect(statuses[statuses.length - 1]).toEqual({ connected: false, reconnecting: true });
    expect(viewer.state.expr[0]).toBe(0.45);
    clock.advance(RECONNECT_DELAY_MS);
    expect(mock.sockets).toHaveLength(2);
    mock.openPending();
    expect(statuses[statuses.length - 1]).toEqual({ connected: true, reconnecting: false });
    // The reopened stream repaints the preserved state unprompted.
    const req = lastRequest(mock);
    expect(req.expr[0]).toBe(0.45);
    mock.pump();
    expect(frames[frames.length - 1].frame.pixels[0]).toBe(MockService.exprByte(0.45));
  });

  it("does not reconnect after a deliberate disconnect", async () => {
    const { viewer, mock, clock, statuses } = await connectedViewer();
    viewer.disconnect();
    expect(statuses[statuses.length - 1]).toEqual({ connected: false, reconnecting: false });
    clock.advance(10 * RECONNECT_DELAY_MS);
    expect(mock.sockets).toHaveLength(1);
  });
});

describe("readout", () => {
  it("derives fps from displayed frame times and echoes server render time", async () => {
    const { viewer, mock, clock } = await connectedViewer();
    // Frames land at t = 16, 116, 216 on top of the initial frame at t = 0.
    for (const value of [0.1, 0.2, 0.3]) {
      viewer.onSliderChange(0, value);
      clock.advance(DEBOUNCE_MS);
      mock.pump();
      clock.advance(100 - DEBOUNCE_MS);
    }
    const readout = viewer.readout();
    expect(readout.fps).toBeCloseTo((1000 * 3) / 216, 8);
    expect(readout.renderMs).toBe(2.0);
    expect(readout.roundTripMs).toBe(0);
  });
});

describe("service errors", () => {
  it("are surfaced and leave the viewer usable", async () => {
    const { viewer, mock, clock, errors, frames } = await connectedViewer();
    mock.script = () => ({ kind: "error", code: "oversize", message: "exceeds the pixel budget" });
    viewer.setResolution(4096, 4096);
    clock.advance(DEBOUNCE_MS);
    mock.pump();
    expect(errors).toHaveLength(1);
    expect(errors[0].code).toBe("oversize");
    mock.script = () => ({ kind: "frame" });
    viewer.setResolution(128, 128);
    clock.advance(DEBOUNCE_MS);
    mock.pump();
    expect(frames).toHaveLength(1);
  });
});
