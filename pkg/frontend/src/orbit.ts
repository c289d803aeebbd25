/**
 * Orbit camera parameters and their mapping to the service's look-at spec.
 *
 * The scene is y-up; azimuth 0 / elevation 0 places the eye on the +z side
 * of the target, matching the viewing arc the training scenes are captured
 * from. All rendering happens server-side, so the client never needs more
 * camera math than this eye placement.
 */

import type { CameraSpec } from "./protocol.js";

export interface Orbit {
  /** Radians around the y axis; 0 looks down -z at the target. */
  azimuth: number;
  /** Radians above the horizon; positive looks down from above. */
  elevation: number;
  distance: number;
  target: [number, number, number];
}

export const DEFAULT_ORBIT: Orbit = {
  azimuth: 0,
  elevation: 0,
  distance: 3.2,
  target: [0, 0, 0],
};

/** Keep the eye off the poles so the y-up look-at frame stays well formed. */
export const MAX_ELEVATION = (89 / 180) * Math.PI;
const MIN_DISTANCE = 1e-3;

export function clampOrbit(orbit: Orbit): Orbit {
  return {
    ...orbit,
    elevation: Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, orbit.elevation)),
    distance: Math.max(MIN_DISTANCE, orbit.distance),
  };
}

export function orbitEye(orbit: Orbit): [number, number, number] {
  const { azimuth, elevation, distance, target } = orbit;
  const horizontal = distance * Math.cos(elevation);
  return [
    target[0] + horizontal * Math.sin(azimuth),
    target[1] + distance * Math.sin(elevation),
    target[2] + horizontal * Math.cos(azimuth),
  ];
}

export function orbitCamera(orbit: Orbit, fov = 40.0): CameraSpec {
  return { eye: orbitEye(orbit), target: [...orbit.target], fov };
}
