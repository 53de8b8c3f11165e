import { Hud } from "./hud.js";
import { InputController } from "./input.js";
import { distance, type Vec3 } from "./pose.js";
import type { FrameMsg } from "./protocol.js";
import { ViewerSession } from "./session.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const hud = new Hud(document.getElementById("hud")!);
const rSlider = document.getElementById("radius") as HTMLInputElement;
const rLabel = document.getElementById("radius-label")!;
const stereoBox = document.getElementById("stereo") as HTMLInputElement;

const input = new InputController();
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const session = new ViewerSession({ url: wsUrl, input });
session.connect();

let stereo = false;
let clientAnchor: Vec3 = [0, 0, 0];
let robotAnchor: Vec3 | null = null;
let lastFrame: FrameMsg | null = null;
let lastFrameAt = 0;
let framesDrawn = 0;
let fpsWindowStart = performance.now();
let fps = 0;
const busy = [false, false];

function reZero(): void {
  session.sendConfig({ re_zero: true });
  clientAnchor = [...input.position];
  robotAnchor = session.robotPose ? [...session.robotPose.t] : null;
}

// -- input wiring -----------------------------------------------------------

let dragging = false;
let lastX = 0;
let lastY = 0;
canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  lastX = e.clientX;
  lastY = e.clientY;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) return;
  input.drag(e.clientX - lastX, e.clientY - lastY, canvas.clientWidth, canvas.clientHeight);
  lastX = e.clientX;
  lastY = e.clientY;
});
canvas.addEventListener("pointerup", () => {
  dragging = false;
});
window.addEventListener("keydown", (e) => {
  if (e.code === "KeyZ") {
    reZero();
    return;
  }
  input.keyDown(e.code);
});
window.addEventListener("keyup", (e) => input.keyUp(e.code));
window.addEventListener("blur", () => input.clearKeys());

rSlider.addEventListener("input", () => {
  const r = parseFloat(rSlider.value);
  rLabel.textContent = `${r.toFixed(2)} m`;
  session.sendConfig({ r });
});

stereoBox.addEventListener("change", () => {
  stereo = stereoBox.checked;
  canvas.width = stereo ? 1024 : 512;
  session.sendConfig({ stereo });
});

// -- render loop -------------------------------------------------------------

async function drawSlot(slot: number): Promise<void> {
  const frame = session.frames[slot].take();
  if (!frame || busy[slot]) return;
  busy[slot] = true;
  try {
    const bitmap = await createImageBitmap(
      new Blob([frame.payload as BlobPart], { type: "image/jpeg" })
    );
    const x = stereo ? slot * 512 : 0;
    ctx.drawImage(bitmap, x, 0, 512, 512);
    bitmap.close();
    if (slot === 0) {
      lastFrame = frame;
      lastFrameAt = performance.now();
      framesDrawn++;
    }
  } finally {
    busy[slot] = false;
  }
}

function tick(): void {
  void drawSlot(0);
  if (stereo) void drawSlot(1);

  const now = performance.now();
  if (now - fpsWindowStart >= 1000) {
    fps = (framesDrawn * 1000) / (now - fpsWindowStart);
    framesDrawn = 0;
    fpsWindowStart = now;
  }
  if (robotAnchor === null && session.robotPose) {
    robotAnchor = [...session.robotPose.t];
  }
  let ds: number | null = null;
  if (session.robotPose && robotAnchor) {
    const c: Vec3 = [
      input.position[0] - clientAnchor[0],
      input.position[1] - clientAnchor[1],
      input.position[2] - clientAnchor[2],
    ];
    const r: Vec3 = [
      session.robotPose.t[0] - robotAnchor[0],
      session.robotPose.t[1] - robotAnchor[1],
      session.robotPose.t[2] - robotAnchor[2],
    ];
    ds = distance(c, r);
  }
  hud.update({
    connected: session.connected,
    latencyMs: lastFrame ? session.frameLatencyMs(lastFrame) : null,
    dsMeters: ds,
    fps,
    poseHz: session.poseHzMeasured,
    robotLagMs: null,
    stale: now - lastFrameAt > 1000,
  });
  requestAnimationFrame(tick);
}

requestAnimationFrame(tick);
