/** DOM wiring for the sketching client. */

import { ApiClient, LiveFeed, ShadowPayload, SynthesisPayload } from "./api.js";
import { DEFAULT_OVERLAY, compositeOverlay, paperView } from "./overlay.js";
import { GreyRaster, decodeBase64Pgm } from "./pgm.js";
import {
  COMPONENT_SLUGS,
  CanvasState,
  ComponentSlug,
  StrokeSender,
  thinPoints,
} from "./state.js";

const SCALE = 8;

const apiBase =
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8787";
const api = new ApiClient(apiBase);
const state = new CanvasState();
const overlayOpts = { ...DEFAULT_OVERLAY };

let canvasW = 64;
let canvasH = 64;
let latestShadow: GreyRaster | null = null;

const root = document.createElement("div");
root.className = "app";
document.body.appendChild(root);

root.innerHTML = `
  <h1>sketchmanifold</h1>
  <div class="status" id="status">connecting…</div>
  <div class="panes">
    <div class="pane">
      <h2>canvas</h2>
      <canvas id="pad" width="512" height="512"></canvas>
      <div class="toolbar">
        <label><input type="radio" name="tool" value="draw" checked> draw</label>
        <label><input type="radio" name="tool" value="erase"> erase</label>
        <label>width <input type="range" id="width" min="0.5" max="4" step="0.5" value="1.5"></label>
        <label><input type="checkbox" id="shadow-on" checked> shadow</label>
        <label>opacity <input type="range" id="shadow-opacity" min="0" max="100" value="30"></label>
      </div>
    </div>
    <div class="pane">
      <h2>refined preview</h2>
      <canvas id="preview" width="512" height="512"></canvas>
      <div class="sliders" id="sliders"></div>
    </div>
  </div>
`;

const statusEl = root.querySelector("#status") as HTMLDivElement;
const pad = root.querySelector("#pad") as HTMLCanvasElement;
const preview = root.querySelector("#preview") as HTMLCanvasElement;
const padCtx = pad.getContext("2d")!;
const previewCtx = preview.getContext("2d")!;
padCtx.imageSmoothingEnabled = false;
previewCtx.imageSmoothingEnabled = false;

// offscreen layers at native raster size / display size
const shadowLayer = document.createElement("canvas");
const inkLayer = document.createElement("canvas");
inkLayer.width = pad.width;
inkLayer.height = pad.height;

function setStatus(text: string, bad = false): void {
  statusEl.textContent = text;
  statusEl.classList.toggle("bad", bad);
}

/** Redraw the ink layer from scratch; the view is replay of the strokes. */
function redrawInk(): void {
  const ctx = inkLayer.getContext("2d")!;
  ctx.clearRect(0, 0, inkLayer.width, inkLayer.height);
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  for (const stroke of state.replay()) {
    ctx.globalCompositeOperation = stroke.erase ? "destination-out" : "source-over";
    ctx.strokeStyle = "#1a1a1a";
    ctx.lineWidth = stroke.width * SCALE;
    ctx.beginPath();
    ctx.moveTo(stroke.points[0][0] * SCALE, stroke.points[0][1] * SCALE);
    for (const [x, y] of stroke.points.slice(1)) {
      ctx.lineTo(x * SCALE, y * SCALE);
    }
    ctx.stroke();
  }
  ctx.globalCompositeOperation = "source-over";
}

function repaintPad(): void {
  const blank: GreyRaster = {
    width: canvasW,
    height: canvasH,
    pixels: new Uint8Array(canvasW * canvasH),
  };
  const rgba = compositeOverlay(blank, latestShadow, overlayOpts);
  shadowLayer.width = canvasW;
  shadowLayer.height = canvasH;
  shadowLayer
    .getContext("2d")!
    .putImageData(new ImageData(rgba, canvasW, canvasH), 0, 0);
  padCtx.clearRect(0, 0, pad.width, pad.height);
  padCtx.drawImage(shadowLayer, 0, 0, pad.width, pad.height);
  padCtx.drawImage(inkLayer, 0, 0);
}

function repaintPreview(raster: GreyRaster): void {
  const buf = document.createElement("canvas");
  buf.width = raster.width;
  buf.height = raster.height;
  buf
    .getContext("2d")!
    .putImageData(new ImageData(paperView(raster), raster.width, raster.height), 0, 0);
  previewCtx.clearRect(0, 0, preview.width, preview.height);
  previewCtx.drawImage(buf, 0, 0, preview.width, preview.height);
}

function applyShadow(payload: ShadowPayload): void {
  latestShadow = decodeBase64Pgm(payload.composite_pgm);
  repaintPad();
}

function applySynthesis(payload: SynthesisPayload): void {
  repaintPreview(decodeBase64Pgm(payload.pgm));
}

async function refresh(): Promise<void> {
  if (!state.sessionId) return;
  const [shadow, synthesis] = await Promise.all([
    api.fetchShadow(state.sessionId),
    api.fetchSynthesis(state.sessionId),
  ]);
  applyShadow(shadow);
  applySynthesis(synthesis);
}

// -- stroke input -----------------------------------------------------------

const sender = new StrokeSender(async (stroke) => {
  if (!state.sessionId) throw new Error("no session yet");
  await api.sendStroke(state.sessionId, stroke);
});
sender.onStatus = (offline, pending) => {
  if (offline) {
    setStatus(`offline, ${pending} stroke(s) queued for retry`, true);
  } else if (pending > 0) {
    setStatus(`sending (${pending} queued)`);
  } else {
    setStatus("connected");
  }
};

let activePoints: [number, number][] | null = null;

function padPoint(ev: PointerEvent): [number, number] {
  const rect = pad.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvasW;
  const y = ((ev.clientY - rect.top) / rect.height) * canvasH;
  return [
    Math.min(canvasW - 1e-3, Math.max(0, x)),
    Math.min(canvasH - 1e-3, Math.max(0, y)),
  ];
}

pad.addEventListener("pointerdown", (ev) => {
  pad.setPointerCapture(ev.pointerId);
  activePoints = [padPoint(ev)];
});

pad.addEventListener("pointermove", (ev) => {
  if (!activePoints) return;
  activePoints.push(padPoint(ev));
  const pts = thinPoints(activePoints);
  if (pts.length >= 2) {
    // live wet-ink feedback before the stroke is committed
    redrawInk();
    const ctx = inkLayer.getContext("2d")!;
    ctx.globalCompositeOperation =
      state.tool === "erase" ? "destination-out" : "source-over";
    ctx.strokeStyle = "#1a1a1a";
    ctx.lineWidth = state.strokeWidth * SCALE;
    ctx.beginPath();
    ctx.moveTo(pts[0][0] * SCALE, pts[0][1] * SCALE);
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x * SCALE, y * SCALE);
    ctx.stroke();
    ctx.globalCompositeOperation = "source-over";
    repaintPad();
  }
});

pad.addEventListener("pointerup", () => {
  if (!activePoints) return;
  const pts = thinPoints(activePoints);
  activePoints = null;
  if (pts.length < 2) {
    redrawInk();
    repaintPad();
    return;
  }
  const stroke = state.addStroke(pts, state.strokeWidth, state.tool === "erase");
  redrawInk();
  repaintPad();
  sender.enqueue(stroke);
});

// -- toolbar ----------------------------------------------------------------

for (const radio of root.querySelectorAll<HTMLInputElement>("input[name=tool]")) {
  radio.addEventListener("change", () => {
    state.tool = radio.value as "draw" | "erase";
  });
}
(root.querySelector("#width") as HTMLInputElement).addEventListener("input", (ev) => {
  state.strokeWidth = Number((ev.target as HTMLInputElement).value);
});
(root.querySelector("#shadow-on") as HTMLInputElement).addEventListener(
  "change",
  (ev) => {
    overlayOpts.showShadow = (ev.target as HTMLInputElement).checked;
    repaintPad();
  },
);
(root.querySelector("#shadow-opacity") as HTMLInputElement).addEventListener(
  "input",
  (ev) => {
    overlayOpts.shadowOpacity = Number((ev.target as HTMLInputElement).value) / 100;
    repaintPad();
  },
);

// -- blend sliders ----------------------------------------------------------

let weightsInFlight = false;
let weightsDirty = false;

async function pushWeights(): Promise<void> {
  if (!state.sessionId || weightsInFlight) {
    weightsDirty = weightsInFlight;
    return;
  }
  weightsInFlight = true;
  try {
    do {
      weightsDirty = false;
      await api.setWeights(state.sessionId, { ...state.weights });
    } while (weightsDirty);
  } catch (err) {
    setStatus(`weight update failed: ${String(err)}`, true);
  } finally {
    weightsInFlight = false;
  }
}

const sliders = root.querySelector("#sliders") as HTMLDivElement;
for (const slug of COMPONENT_SLUGS) {
  const row = document.createElement("label");
  row.className = "slider-row";
  const nameSpan = document.createElement("span");
  nameSpan.textContent = slug.replace("_", " ");
  const input = document.createElement("input");
  input.type = "range";
  input.min = "0";
  input.max = "100";
  input.value = "0";
  const valueSpan = document.createElement("span");
  valueSpan.textContent = "0.00";
  input.addEventListener("input", () => {
    const wb = state.setWeight(slug as ComponentSlug, Number(input.value) / 100);
    valueSpan.textContent = wb.toFixed(2);
    void pushWeights();
  });
  row.append(nameSpan, input, valueSpan);
  sliders.appendChild(row);
}

// -- session bootstrap --------------------------------------------------------

async function start(): Promise<void> {
  try {
    const info = await api.createSession();
    state.sessionId = info.session_id;
    canvasW = info.canvas.width;
    canvasH = info.canvas.height;
    setStatus("connected");
    new LiveFeed(api.liveUrl(info.session_id), (push) => {
      if (!state.acceptPush(push)) return;
      if (push.shadow) applyShadow(push.shadow as ShadowPayload);
      if (push.synthesis) applySynthesis(push.synthesis as SynthesisPayload);
      if (!push.shadow && !push.synthesis) void refresh();
    });
    await refresh();
  } catch (err) {
    setStatus(`cannot reach ${apiBase}: ${String(err)}`, true);
    setTimeout(() => void start(), 2000);
  }
}

redrawInk();
repaintPad();
void start();
