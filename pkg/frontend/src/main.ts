/**
 * Browser wiring: canvas render loop, DOM controls, and the live socket.
 * All logic lives in the imported modules; this file only adapts them to
 * the DOM, so everything interesting stays testable in node.
 */
import { TeleopClient, SocketLike } from "./client.js";
import { forceDisplay, formatBar, BAR_FULL_SCALE } from "./forces.js";
import { InputMapper } from "./input.js";
import { Vec3 } from "./protocol.js";
import { makeViewModel, project, scenePolylines } from "./view.js";

const STYLE_COLORS: Record<string, string> = {
  outer: "#7f8c8d",
  pad: "#27ae60",
  inner: "#2980b9",
};

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  const like: SocketLike = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onopen: null,
    onclose: null,
    onerror: null,
    onmessage: null,
  };
  ws.onopen = () => like.onopen?.();
  ws.onclose = () => like.onclose?.();
  ws.onerror = () => like.onerror?.();
  ws.onmessage = (ev) => like.onmessage?.({ data: String(ev.data) });
  return like;
}

function start(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const banner = document.getElementById("banner")!;
  const barFill = document.getElementById("bar-fill")!;
  const barText = document.getElementById("bar-text")!;
  const recordBtn = document.getElementById("record") as HTMLButtonElement;
  const saveForceBtn = document.getElementById("save-force") as HTMLButtonElement;
  const saveVisualBtn = document.getElementById("save-visual") as HTMLButtonElement;
  const resetBtn = document.getElementById("reset") as HTMLButtonElement;

  const vm = makeViewModel();
  const url = `ws://${location.hostname || "127.0.0.1"}:8765`;
  const client = new TeleopClient(url, browserSocket);
  const input = new InputMapper((pos: Vec3) => client.sendTarget(pos));

  client.onStatus = (status) => {
    vm.statusBanner = status === "open" ? null : `connection: ${status}`;
  };
  client.onError = (detail) => {
    vm.statusBanner = `service: ${detail}`;
  };
  client.onSaved = (path) => {
    vm.savedPath = path;
  };

  canvas.addEventListener("pointerdown", (e) => input.pointerDown(e.offsetX, e.offsetY));
  canvas.addEventListener("pointermove", (e) => input.pointerMove(e.offsetX, e.offsetY));
  window.addEventListener("pointerup", () => input.pointerUp());
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    input.wheel(e.deltaY);
  });
  window.addEventListener("keydown", (e) => {
    if (input.key(e.key)) e.preventDefault();
  });

  let recording = false;
  recordBtn.addEventListener("click", () => {
    recording = !recording;
    if (recording) client.recordStart();
    else client.recordStop();
    recordBtn.textContent = recording ? "stop recording" : "start recording";
  });
  saveForceBtn.addEventListener("click", () => client.saveDemo("force"));
  saveVisualBtn.addEventListener("click", () => client.saveDemo("visual"));
  resetBtn.addEventListener("click", () => {
    client.reset("fixed", 0);
    recording = false;
    recordBtn.textContent = "start recording";
  });

  let frames = 0;
  let fpsWindowStart = performance.now();

  function draw(): void {
    const latest = client.takeLatest();
    if (latest) {
      vm.state = latest;
      input.seedFrom(latest);
    }
    const w = canvas.width;
    const h = canvas.height;
    ctx.clearRect(0, 0, w, h);

    for (const line of scenePolylines(vm)) {
      ctx.strokeStyle = STYLE_COLORS[line.style] ?? "#000";
      ctx.lineWidth = line.style === "pad" ? 2 : 1;
      ctx.beginPath();
      line.points.forEach((p, i) => {
        const q = project(vm.camera, p, w, h);
        if (i === 0) ctx.moveTo(q.x, q.y);
        else ctx.lineTo(q.x, q.y);
      });
      ctx.stroke();
    }

    if (vm.state) {
      const fd = forceDisplay(vm.state);
      const tip: Vec3 = [
        vm.state.handler[0] + vm.geometry.innerLength / 2,
        vm.state.handler[1],
        vm.state.handler[2],
      ];
      for (const arrow of fd.arrows) {
        const from = project(vm.camera, tip, w, h);
        const to = project(
          vm.camera,
          [
            tip[0] + arrow.direction[0] * arrow.length,
            tip[1] + arrow.direction[1] * arrow.length,
            tip[2] + arrow.direction[2] * arrow.length,
          ],
          w,
          h,
        );
        ctx.strokeStyle = arrow.kind === "normal" ? "#c0392b" : "#f39c12";
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.moveTo(from.x, from.y);
        ctx.lineTo(to.x, to.y);
        ctx.stroke();
      }
      (barFill as HTMLElement).style.width = `${fd.barFraction * 100}%`;
      barText.textContent = `${formatBar(fd.barValue)} / ${BAR_FULL_SCALE} N`;

      const hud = [
        `depth ${vm.state.depth.toFixed(3)} m`,
        `distance ${vm.state.distance.toFixed(3)} m`,
        vm.state.recording ? "REC" : "",
      ].join("   ");
      ctx.fillStyle = "#2c3e50";
      ctx.font = "14px monospace";
      ctx.fillText(hud, 12, 20);
    }

    banner.textContent = vm.statusBanner ?? (vm.savedPath ? `saved ${vm.savedPath}` : "");
    (banner as HTMLElement).style.display = banner.textContent ? "block" : "none";

    frames += 1;
    const now = performance.now();
    if (now - fpsWindowStart >= 1000) {
      vm.fps = (frames * 1000) / (now - fpsWindowStart);
      frames = 0;
      fpsWindowStart = now;
    }
    requestAnimationFrame(draw);
  }

  client.connect();
  requestAnimationFrame(draw);
}

window.addEventListener("DOMContentLoaded", start);
