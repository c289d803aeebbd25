/**
 * Websocket client enforcing the viewer's request discipline.
 *
 * At most one request is ever in flight. While it is pending, newer
 * requests collapse into a single latest-wins slot, so a burst of control
 * changes costs one render, not one per event. Responses are matched to
 * requests by id; a frame whose id is older than the one already displayed
 * is discarded rather than shown out of order.
 *
 * The socket constructor is injected so tests can substitute a scripted
 * mock service and the node acceptance test can use a ws implementation.
 */

import {
  decodeFrame,
  parseErrorMessage,
  type ErrorMessage,
  type Frame,
  type RenderRequest,
} from "./protocol.js";

export interface WebSocketLike {
  binaryType: string;
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

const READY_OPEN = 1;

export type RequestBody = Omit<RenderRequest, "request_id">;

export interface FrameStats {
  /** Wall time from send to display, as seen by this client. */
  roundTripMs: number;
  /** Server-side render time reported in the frame header. */
  renderMs: number;
  requestId: number;
}

export interface StreamEvents {
  onFrame(frame: Frame, stats: FrameStats): void;
  onError(error: ErrorMessage): void;
  onOpen?(): void;
  onClose?(): void;
}

export class StreamClient {
  private socket: WebSocketLike | null = null;
  private nextId = 1;
  private inflightId: number | null = null;
  private sentAt = 0;
  private pending: RequestBody | null = null;
  private latestDisplayedId = 0;

  constructor(
    private readonly factory: SocketFactory,
    private readonly events: StreamEvents,
    private readonly now: () => number = () => performance.now(),
  ) {}

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === READY_OPEN;
  }

  get hasInflight(): boolean {
    return this.inflightId !== null;
  }

  open(url: string): void {
    this.closeSocket();
    const socket = this.factory(url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.events.onOpen?.();
      this.flushPending();
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onclose = () => {
      // The in-flight request will never be answered on this socket.
      this.inflightId = null;
      this.socket = null;
      this.events.onClose?.();
    };
    socket.onerror = () => socket.close();
    this.socket = socket;
  }

  close(): void {
    this.pending = null;
    this.closeSocket();
  }

  /** Queue a render. While one is in flight the newest request wins. */
  request(body: RequestBody): void {
    if (!this.connected || this.inflightId !== null) {
      this.pending = body;
      return;
    }
    this.dispatch(body);
  }

  private dispatch(body: RequestBody): void {
    const id = this.nextId++;
    this.inflightId = id;
    this.sentAt = this.now();
    this.socket!.send(JSON.stringify({ request_id: id, ...body }));
  }

  private flushPending(): void {
    if (this.pending !== null && this.connected && this.inflightId === null) {
      const body = this.pending;
      this.pending = null;
      this.dispatch(body);
    }
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      const error = parseErrorMessage(data);
      if (error.request_id !== null && error.request_id === this.inflightId) {
        this.inflightId = null;
      }
      this.events.onError(error);
      this.flushPending();
      return;
    }
    const frame = decodeFrame(data as ArrayBuffer);
    const id = frame.header.request_id;
    if (id === this.inflightId) {
      this.inflightId = null;
    }
    if (id < this.latestDisplayedId) {
      // Stale: something newer is already on screen.
      this.flushPending();
      return;
    }
    this.latestDisplayedId = id;
    this.events.onFrame(frame, {
      roundTripMs: this.now() - this.sentAt,
      renderMs: frame.header.render_ms,
      requestId: id,
    });
    this.flushPending();
  }

  private closeSocket(): void {
    if (this.socket !== null) {
      const socket = this.socket;
      this.socket = null;
      this.inflightId = null;
      socket.onclose = null;
      socket.close();
    }
  }
}
