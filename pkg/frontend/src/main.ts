/**
 * Entry point: connect to the render service named by ?service=host:port
 * (default: the page's own host) and mount the control surface.
 */

import { buildViewerUI, ViewerOutput } from "./dom.js";
import { Viewer } from "./viewer.js";
import type { WebSocketLike } from "./client.js";

async function start(): Promise<void> {
  const root = document.getElementById("viewer")!;
  const addr = new URLSearchParams(location.search).get("service") ?? location.host;
  const output = new ViewerOutput();
  const viewer = new Viewer({
    socketFactory: (url) => new WebSocket(url) as unknown as WebSocketLike,
    onFrame: (frame) => output.onFrame(frame),
    onStatus: (status) => output.onStatus(status),
    onError: (error) => output.onError(error),
  });
  try {
    const info = await viewer.connect(addr);
    buildViewerUI(root, viewer, output);
    document.title = `blendsplat viewer - ${info.backend}, N=${info.N}`;
  } catch (err) {
    root.textContent = `could not reach render service at ${addr}: ${err}`;
  }
}

start();
