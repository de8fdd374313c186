/**
 * Force display math: arrow geometry for the normal/friction vectors and
 * the numeric magnitude bar. Pure functions so the display contract (bar
 * within 1% of the streamed norms) is testable against recorded sessions.
 */
import { StateMessage, Vec3 } from "./protocol.js";

export function norm(v: Vec3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

export interface ForceArrow {
  /** world-space direction, unit length */
  direction: Vec3;
  /** display length in world units: magnitude * scale, capped */
  length: number;
  magnitude: number;
  kind: "normal" | "friction";
}

export interface ForceDisplay {
  arrows: ForceArrow[];
  normalMagnitude: number;
  frictionMagnitude: number;
  /** the number shown on the magnitude bar: ||f_normal|| + ||f_friction|| */
  barValue: number;
  /** bar fill, 0..1 against fullScale */
  barFraction: number;
}

export const DISPLAY_SCALE = 0.02; // world meters per newton for arrows
export const ARROW_CAP = 0.5; // longest arrow we draw, meters
export const BAR_FULL_SCALE = 30; // newtons at a full bar

function arrowFor(force: Vec3, kind: "normal" | "friction"): ForceArrow | null {
  const magnitude = norm(force);
  if (magnitude === 0) return null;
  const direction: Vec3 = [
    force[0] / magnitude,
    force[1] / magnitude,
    force[2] / magnitude,
  ];
  return {
    direction,
    length: Math.min(magnitude * DISPLAY_SCALE, ARROW_CAP),
    magnitude,
    kind,
  };
}

/**
 * Everything the overlay needs for one frame. The bar value is computed
 * from the streamed vectors with no intermediate rounding; display
 * formatting happens at the text layer (formatBar), which is what the 1%
 * fidelity contract is checked against.
 */
export function forceDisplay(state: StateMessage): ForceDisplay {
  const arrows: ForceArrow[] = [];
  const normalArrow = state.collided ? arrowFor(state.f_normal, "normal") : null;
  const frictionArrow = state.collided ? arrowFor(state.f_friction, "friction") : null;
  if (normalArrow) arrows.push(normalArrow);
  if (frictionArrow) arrows.push(frictionArrow);
  const normalMagnitude = norm(state.f_normal);
  const frictionMagnitude = norm(state.f_friction);
  const barValue = normalMagnitude + frictionMagnitude;
  return {
    arrows,
    normalMagnitude,
    frictionMagnitude,
    barValue,
    barFraction: Math.min(barValue / BAR_FULL_SCALE, 1),
  };
}

/** Text shown next to the bar: three significant digits is well inside 1%. */
export function formatBar(barValue: number): string {
  if (barValue === 0) return "0.00 N";
  return `${barValue.toPrecision(3)} N`;
}

/** Parse formatBar output back to a number (used by the fidelity test). */
export function parseBarText(text: string): number {
  return Number.parseFloat(text);
}
