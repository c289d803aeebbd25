/**
 * Viewer state machine: what the control surface edits and how edits turn
 * into render requests.
 *
 * All controls mutate local state synchronously and schedule a render
 * through a 16 ms trailing debounce; together with the client's latest-wins
 * slot this means a burst of M control events ends with exactly the final
 * state's frame on screen, and the UI thread never waits on the network.
 *
 * On an unexpected disconnect the state is kept, a reconnect banner is
 * raised, and the stream is reopened with the current state re-requested,
 * so the session resumes where it left off.
 */

import {
  StreamClient,
  type FrameStats,
  type RequestBody,
  type SocketFactory,
} from "./client.js";
import { clampOrbit, orbitCamera, DEFAULT_ORBIT, type Orbit } from "./orbit.js";
import {
  clampToRange,
  sliderRanges,
  type SliderRange,
} from "./ranges.js";
import type {
  ErrorMessage,
  Frame,
  RenderMode,
  ServiceInfo,
} from "./protocol.js";

export const DEBOUNCE_MS = 16;
export const RECONNECT_DELAY_MS = 500;
const FPS_WINDOW = 30;

export interface TimerHost {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
  now(): number;
}

const realTimers: TimerHost = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (handle) => clearTimeout(handle as Parameters<typeof clearTimeout>[0]),
  now: () => performance.now(),
};

export interface ViewerState {
  expr: number[];
  orbit: Orbit;
  mode: RenderMode;
  /** Depth fraction peeled away in peel mode. */
  fraction: number;
  /** Reference expression compared against in opacity_diff mode. */
  exprRef: number[];
  width: number;
  height: number;
  background: [number, number, number];
  fov: number;
}

export interface ViewerStatus {
  connected: boolean;
  reconnecting: boolean;
}

export interface Readout {
  fps: number;
  roundTripMs: number;
  renderMs: number;
}

type FetchLike = (url: string) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export interface ViewerDeps {
  socketFactory: SocketFactory;
  fetchImpl?: FetchLike;
  timers?: TimerHost;
  onFrame?: (frame: Frame, stats: FrameStats) => void;
  onError?: (error: ErrorMessage) => void;
  onStatus?: (status: ViewerStatus) => void;
}

export class Viewer {
  readonly state: ViewerState = {
    expr: [],
    orbit: { ...DEFAULT_ORBIT },
    mode: "color",
    fraction: 0,
    exprRef: [],
    width: 256,
    height: 256,
    background: [1, 1, 1],
    fov: 40,
  };

  info: ServiceInfo | null = null;
  ranges: SliderRange[] = [];

  private readonly client: StreamClient;
  private readonly fetchImpl: FetchLike;
  private readonly timers: TimerHost;
  private streamUrl = "";
  private debounceHandle: unknown = null;
  private reconnectHandle: unknown = null;
  private closedByUser = false;
  private status: ViewerStatus = { connected: false, reconnecting: false };
  private lastStats: FrameStats | null = null;
  private frameTimes: number[] = [];

  constructor(private readonly deps: ViewerDeps) {
    this.fetchImpl = deps.fetchImpl ?? ((url) => fetch(url));
    this.timers = deps.timers ?? realTimers;
    this.client = new StreamClient(
      deps.socketFactory,
      {
        onFrame: (frame, stats) => this.handleFrame(frame, stats),
        onError: (error) => this.deps.onError?.(error),
        onOpen: () => this.handleOpen(),
        onClose: () => this.handleClose(),
      },
      () => this.timers.now(),
    );
  }

  /** Fetch service info, build sliders, open the stream. */
  async connect(addr: string): Promise<ServiceInfo> {
    const base = normalizeAddr(addr);
    const response = await this.fetchImpl(`${base.http}/info`);
    if (!response.ok) {
      throw new Error(`service info request failed with status ${response.status}`);
    }
    const info = (await response.json()) as ServiceInfo;
    this.info = info;
    this.ranges = sliderRanges(info.expr_ranges, info.B);
    this.state.expr = this.ranges.map((range) => clampToRange(range, 0));
    this.state.exprRef = [...this.state.expr];
    this.streamUrl = `${base.ws}/stream`;
    this.closedByUser = false;
    this.client.open(this.streamUrl);
    return info;
  }

  disconnect(): void {
    this.closedByUser = true;
    this.cancelTimer("debounceHandle");
    this.cancelTimer("reconnectHandle");
    this.client.close();
    this.setStatus({ connected: false, reconnecting: false });
  }

  getStatus(): ViewerStatus {
    return { ...this.status };
  }

  onSliderChange(index: number, value: number): void {
    this.state.expr[index] = clampToRange(this.ranges[index], value);
    this.scheduleRender();
  }

  onOrbit(change: Partial<Orbit>): void {
    this.state.orbit = clampOrbit({ ...this.state.orbit, ...change });
    this.scheduleRender();
  }

  /**
   * Drive a single basis component: one-hot expression at the component's
   * strongest observed value, optionally on top of a neutral expression.
   */
  basisExplore(index: number, opts: { scale?: number; neutral?: number[] } = {}): void {
    const range = this.ranges[index];
    const strongest =
      Math.abs(range.observedMax) >= Math.abs(range.observedMin)
        ? range.observedMax
        : range.observedMin;
    const neutral = opts.neutral ?? new Array(this.state.expr.length).fill(0);
    const expr = neutral.map((value, i) => clampToRange(this.ranges[i], value));
    expr[index] = clampToRange(range, opts.scale ?? strongest);
    this.state.expr = expr;
    this.state.mode = "color";
    this.scheduleRender();
  }

  /** Peel away the given depth fraction; 0 shows the plain render. */
  peelSlider(fraction: number): void {
    this.state.mode = "peel";
    this.state.fraction = Math.min(1, Math.max(0, fraction));
    this.scheduleRender();
  }

  /** Compare opacities against a reference expression (default: current). */
  opacityDiff(reference?: number[]): void {
    this.state.exprRef = [...(reference ?? this.state.expr)];
    this.state.mode = "opacity_diff";
    this.scheduleRender();
  }

  setMode(mode: RenderMode): void {
    this.state.mode = mode;
    this.scheduleRender();
  }

  setResolution(width: number, height: number): void {
    this.state.width = width;
    this.state.height = height;
    this.scheduleRender();
  }

  /** Send the current state now, bypassing the debounce. */
  requestFrame(): void {
    this.cancelTimer("debounceHandle");
    this.client.request(this.buildRequest());
  }

  readout(): Readout {
    let fps = 0;
    if (this.frameTimes.length >= 2) {
      const first = this.frameTimes[0];
      const last = this.frameTimes[this.frameTimes.length - 1];
      fps = (1000 * (this.frameTimes.length - 1)) / Math.max(last - first, 1e-6);
    }
    return {
      fps,
      roundTripMs: this.lastStats?.roundTripMs ?? 0,
      renderMs: this.lastStats?.renderMs ?? 0,
    };
  }

  private buildRequest(): RequestBody {
    const req: RequestBody = {
      expr: [...this.state.expr],
      camera: orbitCamera(this.state.orbit, this.state.fov),
      width: this.state.width,
      height: this.state.height,
      mode: this.state.mode,
      background: this.state.background,
    };
    if (this.state.mode === "peel") {
      req.fraction = this.state.fraction;
    }
    if (this.state.mode === "opacity_diff") {
      req.expr_ref = [...this.state.exprRef];
    }
    return req;
  }

  private scheduleRender(): void {
    this.cancelTimer("debounceHandle");
    this.debounceHandle = this.timers.setTimeout(() => {
      this.debounceHandle = null;
      this.client.request(this.buildRequest());
    }, DEBOUNCE_MS);
  }

  private handleFrame(frame: Frame, stats: FrameStats): void {
    this.lastStats = stats;
    this.frameTimes.push(this.timers.now());
    if (this.frameTimes.length > FPS_WINDOW) {
      this.frameTimes.shift();
    }
    this.deps.onFrame?.(frame, stats);
  }

  private handleOpen(): void {
    this.setStatus({ connected: true, reconnecting: false });
    // Repaint from current state; after a reconnect this restores the view.
    this.requestFrame();
  }

  private handleClose(): void {
    if (this.closedByUser) {
      return;
    }
    this.setStatus({ connected: false, reconnecting: true });
    this.cancelTimer("reconnectHandle");
    this.reconnectHandle = this.timers.setTimeout(() => {
      this.reconnectHandle = null;
      if (!this.closedByUser) {
        this.client.open(this.streamUrl);
      }
    }, RECONNECT_DELAY_MS);
  }

  private setStatus(status: ViewerStatus): void {
    this.status = status;
    this.deps.onStatus?.(status);
  }

  private cancelTimer(slot: "debounceHandle" | "reconnectHandle"): void {
    if (this[slot] !== null) {
      this.timers.clearTimeout(this[slot]);
      this[slot] = null;
    }
  }
}

function normalizeAddr(addr: string): { http: string; ws: string } {
  let host = addr.trim();
  host = host.replace(/^(https?|wss?):\/\//, "");
  host = host.replace(/\/+$/, "");
  const secure = addr.startsWith("https://") || addr.startsWith("wss://");
  return {
    http: `${secure ? "https" : "http"}://${host}`,
    ws: `${secure ? "wss" : "ws"}://${host}`,
  };
}
