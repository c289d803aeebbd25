/**
 * Slider ranges derived from the service's observed expression ranges.
 *
 * Each slider spans 1.4x the observed extremes so expressions can be pushed
 * past anything in the training set; the stretch between the observed bound
 * and the 1.4x bound is the extrapolation band, where driving starts to
 * produce artifacts and the UI marks the track accordingly.
 */

export const EXTRAPOLATION_FACTOR = 1.4;

export interface SliderRange {
  min: number;
  max: number;
  observedMin: number;
  observedMax: number;
}

/** Observed span assumed for components the service reports no range for. */
const FALLBACK_OBSERVED: [number, number] = [-1.0, 1.0];

export function sliderRange(observedMin: number, observedMax: number): SliderRange {
  if (!(observedMax > observedMin)) {
    [observedMin, observedMax] = FALLBACK_OBSERVED;
  }
  // Scale about zero, but never drop part of the observed range: a component
  // observed as [0.2, 0.8] keeps 0.2 reachable even though 1.4 * 0.2 > 0.2.
  return {
    min: Math.min(observedMin, EXTRAPOLATION_FACTOR * observedMin),
    max: Math.max(observedMax, EXTRAPOLATION_FACTOR * observedMax),
    observedMin,
    observedMax,
  };
}

export function sliderRanges(
  exprRanges: [number[], number[]] | null,
  b: number,
): SliderRange[] {
  const out: SliderRange[] = [];
  for (let i = 0; i < b; i++) {
    if (exprRanges) {
      out.push(sliderRange(exprRanges[0][i], exprRanges[1][i]));
    } else {
      out.push(sliderRange(...FALLBACK_OBSERVED));
    }
  }
  return out;
}

/** True when the value sits in the extrapolation band (outside observed). */
export function isExtrapolated(range: SliderRange, value: number): boolean {
  return value < range.observedMin || value > range.observedMax;
}

export function clampToRange(range: SliderRange, value: number): number {
  return Math.min(range.max, Math.max(range.min, value));
}
