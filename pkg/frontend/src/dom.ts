/**
 * Browser control surface. Everything here is thin glue: state and network
 * discipline live in Viewer/StreamClient, pixel handling in canvas.ts, so
 * this file is only DOM construction and event forwarding.
 *
 * Build order: the UI is assembled after connect() because the sliders need
 * the service-reported ranges; frame/status output is wired back through
 * the ViewerOutput object main.ts hands to the Viewer constructor.
 */

import { drawFrame } from "./canvas.js";
import { isExtrapolated, type SliderRange } from "./ranges.js";
import type { ErrorMessage, Frame } from "./protocol.js";
import type { Viewer, ViewerStatus } from "./viewer.js";

/** Late-bound sink so the Viewer can be built before the DOM exists. */
export class ViewerOutput {
  onFrame: (frame: Frame) => void = () => {};
  onStatus: (status: ViewerStatus) => void = () => {};
  onError: (error: ErrorMessage) => void = () => {};
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (HTMLElement | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

/** Track background with the extrapolation band tinted on both sides. */
function bandGradient(range: SliderRange): string {
  const span = range.max - range.min;
  const lo = ((range.observedMin - range.min) / span) * 100;
  const hi = ((range.observedMax - range.min) / span) * 100;
  return (
    `linear-gradient(to right, #b4883c 0% ${lo}%, ` +
    `#3c5a78 ${lo}% ${hi}%, #b4883c ${hi}% 100%)`
  );
}

function exprSlider(viewer: Viewer, index: number): HTMLElement {
  const range = viewer.ranges[index];
  const value = viewer.state.expr[index];
  const readout = el("span", { class: "value" }, [value.toFixed(2)]);
  const input = el("input", {
    type: "range",
    min: String(range.min),
    max: String(range.max),
    step: String((range.max - range.min) / 400),
    value: String(value),
  });
  input.style.background = bandGradient(range);
  input.addEventListener("input", () => {
    const v = Number(input.value);
    viewer.onSliderChange(index, v);
    readout.textContent = v.toFixed(2);
    readout.classList.toggle("extrapolated", isExtrapolated(range, v));
  });
  return el("label", { class: "expr-slider" }, [
    el("span", { class: "name" }, [`e${index}`]),
    input,
    readout,
  ]);
}

function attachOrbit(canvas: HTMLCanvasElement, viewer: Viewer): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const orbit = viewer.state.orbit;
    viewer.onOrbit({
      azimuth: orbit.azimuth + (ev.clientX - lastX) * 0.01,
      elevation: orbit.elevation + (ev.clientY - lastY) * 0.01,
    });
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    viewer.onOrbit({ distance: viewer.state.orbit.distance * (ev.deltaY > 0 ? 1.1 : 0.9) });
  });
}

export function buildViewerUI(root: HTMLElement, viewer: Viewer, output: ViewerOutput): void {
  const canvas = el("canvas", { width: "256", height: "256" });
  const banner = el("div", { class: "banner hidden" }, ["connection lost, reconnecting..."]);
  const readout = el("div", { class: "readout" }, ["waiting for first frame"]);
  const sliders = el("div", { class: "sliders" });
  viewer.ranges.forEach((_, i) => sliders.append(exprSlider(viewer, i)));

  const basisPick = el("select", {});
  viewer.ranges.forEach((_, i) => basisPick.append(el("option", { value: String(i) }, [`basis ${i}`])));
  const basisGo = el("button", {}, ["explore basis"]);
  basisGo.addEventListener("click", () => viewer.basisExplore(Number(basisPick.value)));

  const peel = el("input", { type: "range", min: "0", max: "1", step: "0.01", value: "0" });
  peel.addEventListener("input", () => viewer.peelSlider(Number(peel.value)));

  const diffToggle = el("button", {}, ["opacity diff vs current"]);
  diffToggle.addEventListener("click", () => {
    if (viewer.state.mode === "opacity_diff") {
      viewer.setMode("color");
      diffToggle.classList.remove("active");
    } else {
      viewer.opacityDiff();
      diffToggle.classList.add("active");
    }
  });

  const colorBtn = el("button", {}, ["color"]);
  colorBtn.addEventListener("click", () => viewer.setMode("color"));

  root.append(
    banner,
    el("div", { class: "stage" }, [canvas, readout]),
    el("div", { class: "controls" }, [
      sliders,
      el("div", { class: "tools" }, [
        colorBtn,
        basisPick,
        basisGo,
        el("label", {}, ["peel", peel]),
        diffToggle,
      ]),
    ]),
  );
  attachOrbit(canvas, viewer);

  output.onFrame = (frame) => {
    drawFrame(canvas, frame);
    const r = viewer.readout();
    readout.textContent =
      `${r.fps.toFixed(1)} fps | round trip ${r.roundTripMs.toFixed(0)} ms | ` +
      `render ${r.renderMs.toFixed(1)} ms`;
  };
  output.onStatus = (status) => {
    banner.classList.toggle("hidden", !status.reconnecting);
  };
  output.onError = (error) => {
    readout.textContent = `service error [${error.code}]: ${error.message}`;
  };
}
