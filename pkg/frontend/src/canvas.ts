/**
 * Frame-to-canvas plumbing. Frames arrive as packed RGB8 rows; canvases
 * want RGBA. The conversion is pure so it can be tested off-browser; the
 * two-line ImageData wrapper is the only part that needs a real canvas.
 */

import type { Frame } from "./protocol.js";

export function rgbToRgba(
  pixels: Uint8Array,
  width: number,
  height: number,
): Uint8ClampedArray<ArrayBuffer> {
  const n = width * height;
  if (pixels.byteLength !== n * 3) {
    throw new Error(`expected ${n * 3} bytes of RGB8 for ${width}x${height}, got ${pixels.byteLength}`);
  }
  const rgba = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    rgba[i * 4] = pixels[i * 3];
    rgba[i * 4 + 1] = pixels[i * 3 + 1];
    rgba[i * 4 + 2] = pixels[i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return rgba;
}

export function drawFrame(canvas: HTMLCanvasElement, frame: Frame): void {
  const { width, height } = frame.header;
  if (canvas.width !== width || canvas.height !== height) {
    canvas.width = width;
    canvas.height = height;
  }
  const rgba = rgbToRgba(frame.pixels, width, height);
  canvas.getContext("2d")!.putImageData(new ImageData(rgba, width, height), 0, 0);
}
