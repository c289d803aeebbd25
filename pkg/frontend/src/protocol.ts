/**
 * Message schemas of the render service, plus the binary frame codec.
 *
 * The service answers every websocket request with exactly one message:
 * a binary frame ([uint32 LE header length][header JSON][raw RGB8 rows])
 * on success, or a JSON text error carrying the request_id. These types
 * and the codec are the single place that layout is spelled out client-side.
 */

export interface ServiceInfo {
  B: number;
  f_dim: number;
  k: number;
  N: number;
  backend: string;
  /** [per-component min, per-component max] over the training set, or null. */
  expr_ranges: [number[], number[]] | null;
  max_resolution: number;
}

export type RenderMode = "color" | "peel" | "opacity_diff";

export interface CameraSpec {
  eye: [number, number, number];
  target?: [number, number, number];
  up?: [number, number, number];
  fov?: number;
}

export interface RenderRequest {
  request_id: number;
  expr: number[];
  camera: CameraSpec;
  width: number;
  height: number;
  mode?: RenderMode;
  fraction?: number;
  expr_ref?: number[];
  background?: [number, number, number];
}

export interface FrameHeader {
  type: "frame";
  request_id: number;
  render_ms: number;
  width: number;
  height: number;
}

export interface ErrorMessage {
  type: "error";
  request_id: number | null;
  code: string;
  message: string;
}

export interface Frame {
  header: FrameHeader;
  /** Row-major RGB8, width*height*3 bytes. */
  pixels: Uint8Array;
}

export function decodeFrame(blob: ArrayBuffer | Uint8Array): Frame {
  const bytes = blob instanceof Uint8Array ? blob : new Uint8Array(blob);
  if (bytes.byteLength < 4) {
    throw new Error(`binary message too short: ${bytes.byteLength} bytes`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const headLen = view.getUint32(0, true);
  if (4 + headLen > bytes.byteLength) {
    throw new Error(`frame header length ${headLen} overruns the message`);
  }
  const header = JSON.parse(
    new TextDecoder().decode(bytes.subarray(4, 4 + headLen)),
  ) as FrameHeader;
  return { header, pixels: bytes.subarray(4 + headLen) };
}

/** Inverse of decodeFrame; the mock service in the tests speaks through it. */
export function encodeFrame(header: FrameHeader, pixels: Uint8Array): Uint8Array {
  const head = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(4 + head.byteLength + pixels.byteLength);
  new DataView(out.buffer).setUint32(0, head.byteLength, true);
  out.set(head, 4);
  out.set(pixels, 4 + head.byteLength);
  return out;
}

export function parseErrorMessage(text: string): ErrorMessage {
  const msg = JSON.parse(text);
  if (msg === null || typeof msg !== "object" || msg.type !== "error") {
    throw new Error(`unexpected text message from service: ${text}`);
  }
  return msg as ErrorMessage;
}
