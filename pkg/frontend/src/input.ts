/**
 * Input mapping: a 2-D mouse steers the 3-D handler target.
 *
 * Dragging moves the target in the scene's y-z plane (screen right = +y,
 * screen up = +z at the default camera); the scroll wheel and arrow keys
 * move it along the insertion axis x. The mapper owns the current target
 * and emits it through a callback; the client rate-limits the traffic.
 */
import { StateMessage, Vec3 } from "./protocol.js";

export interface InputOptions {
  /** meters of y/z travel per pixel of drag */
  dragGain?: number;
  /** meters of x travel per wheel notch or key press */
  axisStep?: number;
  /** workspace bounds, clamped symmetrically */
  maxLateral?: number;
  minX?: number;
  maxX?: number;
}

export class InputMapper {
  private target: Vec3 | null = null;
  private dragging = false;
  private lastPx = 0;
  private lastPy = 0;

  private readonly dragGain: number;
  private readonly axisStep: number;
  private readonly maxLateral: number;
  private readonly minX: number;
  private readonly maxX: number;

  constructor(
    private readonly emit: (pos: Vec3) => void,
    options: InputOptions = {},
  ) {
    this.dragGain = options.dragGain ?? 0.002;
    this.axisStep = options.axisStep ?? 0.02;
    this.maxLateral = options.maxLateral ?? 0.25;
    this.minX = options.minX ?? -0.8;
    this.maxX = options.maxX ?? 0.4;
  }

  /** Target tracks the handler until the operator first steers. */
  seedFrom(state: StateMessage): void {
    if (this.target === null) {
      this.target = [...state.handler] as Vec3;
    }
  }

  currentTarget(): Vec3 | null {
    return this.target ? ([...this.target] as Vec3) : null;
  }

  pointerDown(px: number, py: number): void {
    this.dragging = true;
    this.lastPx = px;
    this.lastPy = py;
  }

  pointerUp(): void {
    this.dragging = false;
  }

  /** Drag: screen dx -> +y, screen dy -> -z (screen y grows downward). */
  pointerMove(px: number, py: number): void {
    if (!this.dragging || this.target === null) return;
    const dy = (px - this.lastPx) * this.dragGain;
    const dz = -(py - this.lastPy) * this.dragGain;
    this.lastPx = px;
    this.lastPy = py;
    this.target[1] = clamp(this.target[1] + dy, -this.maxLateral, this.maxLateral);
    this.target[2] = clamp(this.target[2] + dz, -this.maxLateral, this.maxLateral);
    this.emit(this.currentTarget()!);
  }

  /** Wheel: scrolling forward (negative deltaY) advances +x. */
  wheel(deltaY: number): void {
    if (this.target === null) return;
    const steps = deltaY < 0 ? 1 : -1;
    this.nudgeX(steps * this.axisStep);
  }

  /** ArrowUp/ArrowRight advance, ArrowDown/ArrowLeft retreat. */
  key(code: string): boolean {
    if (this.target === null) return false;
    switch (code) {
      case "ArrowUp":
      case "ArrowRight":
        this.nudgeX(this.axisStep);
        return true;
      case "ArrowDown":
      case "ArrowLeft":
        this.nudgeX(-this.axisStep);
        return true;
      default:
        return false;
    }
  }

  private nudgeX(dx: number): void {
    if (this.target === null) return;
    this.target[0] = clamp(this.target[0] + dx, this.minX, this.maxX);
    this.emit(this.currentTarget()!);
  }
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}
