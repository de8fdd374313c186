/**
 * View model and projection math, DOM-free.
 *
 * A fixed-up orbit camera looks at the workspace center; world points
 * project through a simple perspective transform onto canvas pixels. The
 * scene is drawn as wireframe circles and axis lines — enough to judge
 * alignment and depth without a GPU.
 */
import { StateMessage, Vec3 } from "./protocol.js";

export interface Camera {
  /** orbit angles around the target point, radians */
  yaw: number;
  pitch: number;
  distance: number;
  center: Vec3;
  /** vertical field of view scale: pixels per unit tan-angle */
  focal: number;
}

export function defaultCamera(): Camera {
  return {
    yaw: -0.9,
    pitch: 0.35,
    distance: 2.2,
    center: [0.1, 0, 0],
    focal: 900,
  };
}

export interface Projected {
  x: number;
  y: number;
  /** camera-space depth; points behind the camera are culled by callers */
  depth: number;
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

/** World -> camera-space -> screen pixels (origin at canvas center). */
export function project(cam: Camera, p: Vec3, width: number, height: number): Projected {
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const rel = sub(p, cam.center);
  // yaw about world z (x toward viewer at yaw 0), then pitch about camera x
  const x1 = cy * rel[0] + sy * rel[1];
  const y1 = -sy * rel[0] + cy * rel[1];
  const z1 = rel[2];
  const y2 = cp * y1 + sp * z1;
  const z2 = -sp * y1 + cp * z1;
  const depth = cam.distance - x1;
  const safe = Math.max(depth, 1e-3);
  return {
    x: width / 2 + (cam.focal * y2) / safe,
    y: height / 2 - (cam.focal * z2) / safe,
    depth,
  };
}

/** Points of a circle of `radius` in the y-z plane at axial position x. */
export function circlePoints(x: number, radius: number, center: Vec3, n = 32): Vec3[] {
  const pts: Vec3[] = [];
  for (let i = 0; i <= n; i++) {
    const a = (2 * Math.PI * i) / n;
    pts.push([
      center[0] + x,
      center[1] + radius * Math.cos(a),
      center[2] + radius * Math.sin(a),
    ]);
  }
  return pts;
}

export interface SceneGeometry {
  innerRadius: number;
  innerLength: number;
  outerInnerRadius: number;
  outerOuterRadius: number;
  outerLength: number;
  targetDepth: number;
}

/** Matches the service defaults; the UI only draws, it never simulates. */
export function defaultGeometry(): SceneGeometry {
  return {
    innerRadius: 0.05,
    innerLength: 0.6,
    outerInnerRadius: 0.06,
    outerOuterRadius: 0.07,
    outerLength: 0.7,
    targetDepth: 0.5,
  };
}

export interface ViewModel {
  camera: Camera;
  geometry: SceneGeometry;
  state: StateMessage | null;
  statusBanner: string | null;
  savedPath: string | null;
  /** frames rendered in the last rate-sample window */
  fps: number;
}

export function makeViewModel(): ViewModel {
  return {
    camera: defaultCamera(),
    geometry: defaultGeometry(),
    state: null,
    statusBanner: null,
    savedPath: null,
    fps: 0,
  };
}

/** Wireframe polylines for one frame: both pipes and the target pad ring. */
export function scenePolylines(vm: ViewModel): { points: Vec3[]; style: string }[] {
  const g = vm.geometry;
  const lines: { points: Vec3[]; style: string }[] = [];
  const outerCenter: Vec3 = [0, 0, 0];
  for (const x of [0, g.outerLength]) {
    lines.push({ points: circlePoints(x, g.outerInnerRadius, outerCenter), style: "outer" });
    lines.push({ points: circlePoints(x, g.outerOuterRadius, outerCenter), style: "outer" });
  }
  lines.push({
    points: circlePoints(g.targetDepth, g.outerInnerRadius, outerCenter),
    style: "pad",
  });
  const s = vm.state;
  if (s) {
    const handler = s.handler;
    const half = g.innerLength / 2;
    for (const dx of [-half, half]) {
      lines.push({
        points: circlePoints(dx, g.innerRadius, handler),
        style: "inner",
      });
    }
    // axis line of the moving pipe
    lines.push({
      points: [
        [handler[0] - half, handler[1], handler[2]],
        [handler[0] + half, handler[1], handler[2]],
      ],
      style: "inner",
    });
  }
  return lines;
}
