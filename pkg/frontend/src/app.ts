/**
 * Coarse-to-fine superpixel annotation UI.
 *
 * Canvas layers, bottom to top: image, superpixel boundaries, mask tint,
 * cursor. The mask is per-pixel state; superpixels are recomputed on the
 * fly at the slider's resolution and act only as a painting aid, so
 * boundaries from different resolutions are independent. Undo/redo applies
 * exact inverse patches.
 */

import { AnnotationApi, ImageInfo, PaletteEntry } from "./api.js";
import { LabelMask, brushPixels, createMask, paintPixels,
         superpixelPixels } from "./mask.js";
import { smoothMask } from "./morphology.js";
import { decodeGrayPng, encodeGrayPng } from "./png.js";
import { SlicScheduler, syncRunner, workerRunner } from "./scheduler.js";
import { DEFAULT_SLIC, SuperpixelMap, boundaryMask } from "./slic.js";
import { UndoStack } from "./undo.js";

interface AppState {
  palette: PaletteEntry[];
  images: ImageInfo[];
  currentId: string | null;
  imageData: ImageData | null;
  mask: LabelMask | null;
  superpixels: SuperpixelMap | null;
  activeLabel: number;
  tool: "superpixel" | "brush";
  brushRadius: number;
  regionSize: number;
  dirty: boolean;
  painting: boolean;
}

const state: AppState = {
  palette: [],
  images: [],
  currentId: null,
  imageData: null,
  mask: null,
  superpixels: null,
  activeLabel: 1,
  tool: "superpixel",
  brushRadius: 6,
  regionSize: DEFAULT_SLIC.regionSize,
  dirty: false,
  painting: false,
};

const api = new AnnotationApi("");
const undoStack = new UndoStack();
const scheduler = new SlicScheduler(makeRunner());

function makeRunner() {
  try {
    const worker = new Worker(new URL("./slic.worker.js", import.meta.url),
                              { type: "module" });
    return workerRunner(worker);
  } catch {
    return syncRunner;
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function layer(id: string): CanvasRenderingContext2D {
  return el<HTMLCanvasElement>(id).getContext("2d")!;
}

function setStatus(text: string, isError = false): void {
  const bar = el<HTMLElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

// ---------------------------------------------------------------------------
// Rendering

function resizeLayers(width: number, height: number): void {
  for (const id of ["layer-image", "layer-bounds", "layer-mask", "layer-cursor"]) {
    const canvas = el<HTMLCanvasElement>(id);
    canvas.width = width;
    canvas.height = height;
  }
}

function drawBoundaries(): void {
  const ctx = layer("layer-bounds");
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (!state.superpixels) return;
  const { width, height } = state.superpixels;
  const edges = boundaryMask(state.superpixels);
  const img = ctx.createImageData(width, height);
  for (let i = 0; i < edges.length; i++) {
    if (edges[i]) {
      img.data[i * 4] = 255;
      img.data[i * 4 + 1] = 255;
      img.data[i * 4 + 2] = 0;
      img.data[i * 4 + 3] = 160;
    }
  }
  ctx.putImageData(img, 0, 0);
}

function drawMask(): void {
  const ctx = layer("layer-mask");
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (!state.mask) return;
  const { width, height, data } = state.mask;
  const img = ctx.createImageData(width, height);
  for (let i = 0; i < data.length; i++) {
    if (data[i] === 0) continue;
    const color = state.palette[data[i]]?.color ?? [255, 0, 255];
    img.data[i * 4] = color[0];
    img.data[i * 4 + 1] = color[1];
    img.data[i * 4 + 2] = color[2];
    img.data[i * 4 + 3] = 128; // ~50% tint over the photo
  }
  ctx.putImageData(img, 0, 0);
}

function drawCursor(x: number, y: number): void {
  const ctx = layer("layer-cursor");
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1;
  if (state.tool === "brush") {
    ctx.beginPath();
    ctx.arc(x, y, state.brushRadius, 0, 2 * Math.PI);
    ctx.stroke();
  } else if (state.superpixels) {
    const id = state.superpixels.ids[y * state.superpixels.width + x];
    el<HTMLElement>("hover-info").textContent = `superpixel ${id}`;
  }
}

function refreshDirtyFlag(): void {
  el<HTMLElement>("save-btn").textContent = state.dirty ? "Save *" : "Save";
}

// ---------------------------------------------------------------------------
// Superpixels

async function recomputeSuperpixels(): Promise<void> {
  if (!state.imageData) return;
  setStatus(`computing superpixels (S=${state.regionSize})...`);
  const t0 = performance.now();
  const result = await scheduler.schedule({
    data: state.imageData.data,
    width: state.imageData.width,
    height: state.imageData.height,
    cfg: { ...DEFAULT_SLIC, regionSize: state.regionSize },
    channels: 4,
  });
  if (result === null) return; // superseded by a newer slider position
  state.superpixels = result;
  drawBoundaries();
  setStatus(`${result.numSegments} superpixels in `
            + `${((performance.now() - t0) / 1000).toFixed(2)}s`);
}

// ---------------------------------------------------------------------------
// Painting

function canvasPos(ev: MouseEvent): { x: number; y: number } | null {
  if (!state.imageData) return null;
  const rect = el<HTMLCanvasElement>("layer-cursor").getBoundingClientRect();
  const x = Math.floor((ev.clientX - rect.left) / rect.width
                       * state.imageData.width);
  const y = Math.floor((ev.clientY - rect.top) / rect.height
                       * state.imageData.height);
  if (x < 0 || y < 0 || x >= state.imageData.width
      || y >= state.imageData.height) {
    return null;
  }
  return { x, y };
}

function paintAt(x: number, y: number): void {
  if (!state.mask) return;
  let pixels: number[];
  if (state.tool === "brush") {
    pixels = brushPixels(state.mask, x, y, state.brushRadius);
  } else {
    if (!state.superpixels) return;
    const id = state.superpixels.ids[y * state.superpixels.width + x];
    pixels = superpixelPixels(state.superpixels.ids, id);
  }
  const patch = paintPixels(state.mask, pixels, state.activeLabel);
  if (patch.indices.length > 0) {
    undoStack.push(patch);
    state.dirty = true;
    drawMask();
    refreshDirtyFlag();
  }
}

function applySmoothing(): void {
  if (!state.mask) return;
  const smoothed = smoothMask(state.mask, 1);
  const changed: number[] = [];
  for (let i = 0; i < state.mask.data.length; i++) {
    if (smoothed.data[i] !== state.mask.data[i]) changed.push(i);
  }
  if (changed.length === 0) {
    setStatus("smoothing: no change");
    return;
  }
  const patch = {
    indices: Int32Array.from(changed),
    before: Uint8Array.from(changed.map((i) => state.mask!.data[i])),
    after: Uint8Array.from(changed.map((i) => smoothed.data[i])),
  };
  state.mask.data.set(smoothed.data);
  undoStack.push(patch);
  state.dirty = true;
  drawMask();
  refreshDirtyFlag();
  setStatus(`smoothing changed ${changed.length} pixels`);
}

// ---------------------------------------------------------------------------
// Persistence

async function saveMask(): Promise<void> {
  if (!state.mask || !state.currentId) return;
  const png = encodeGrayPng(state.mask.data, state.mask.width,
                            state.mask.height);
  try {
    await api.putMaskPng(state.currentId, png);
    state.dirty = false;
    refreshDirtyFlag();
    setStatus(`saved mask for ${state.currentId}`);
    const entry = state.images.find((it) => it.id === state.currentId);
    if (entry) entry.has_mask = true;
    renderImageList();
  } catch (err) {
    setStatus(`save failed: ${err}`, true);
  }
}

async function openImage(id: string): Promise<void> {
  if (state.dirty
      && !window.confirm("Discard unsaved changes on the current image?")) {
    return;
  }
  setStatus(`loading ${id}...`);
  const blob = await (await fetch(api.imageUrl(id))).blob();
  const bitmap = await createImageBitmap(blob);
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const sctx = scratch.getContext("2d")!;
  sctx.drawImage(bitmap, 0, 0);
  state.imageData = sctx.getImageData(0, 0, bitmap.width, bitmap.height);
  state.currentId = id;
  state.dirty = false;
  undoStack.clear();

  resizeLayers(bitmap.width, bitmap.height);
  layer("layer-image").drawImage(bitmap, 0, 0);

  const maskPng = await api.getMaskPng(id);
  if (maskPng) {
    const decoded = decodeGrayPngSafe(maskPng, bitmap.width, bitmap.height);
    state.mask = decoded ?? createMask(bitmap.width, bitmap.height);
  } else {
    state.mask = createMask(bitmap.width, bitmap.height);
  }
  drawMask();
  refreshDirtyFlag();
  renderImageList();
  await recomputeSuperpixels();
}

function decodeGrayPngSafe(png: Uint8Array, width: number,
                           height: number): LabelMask | null {
  try {
    const { width: w, height: h, data } = decodeGrayPng(png);
    if (w !== width || h !== height) return null;
    return { width: w, height: h, data };
  } catch {
    // Server may store masks from other encoders; fall back to canvas decode.
    return null;
  }
}

// ---------------------------------------------------------------------------
// Sidebar

function renderImageList(): void {
  const list = el<HTMLElement>("image-list");
  list.innerHTML = "";
  for (const info of state.images) {
    const item = document.createElement("button");
    item.className = "image-item" + (info.id === state.currentId ? " active" : "");
    item.textContent = `${info.has_mask ? "●" : "○"} ${info.id}`;
    item.title = `${info.width}x${info.height}`;
    item.onclick = () => void openImage(info.id);
    list.appendChild(item);
  }
}

function renderPalette(): void {
  const list = el<HTMLElement>("label-list");
  list.innerHTML = "";
  for (const entry of state.palette) {
    const item = document.createElement("button");
    item.className = "label-item" + (entry.index === state.activeLabel
                                     ? " active" : "");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = `rgb(${entry.color.join(",")})`;
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(` ${entry.index} ${entry.name}`));
    item.onclick = () => {
      state.activeLabel = entry.index;
      renderPalette();
    };
    list.appendChild(item);
  }
}

// ---------------------------------------------------------------------------
// Wiring

export async function startApp(): Promise<void> {
  state.palette = await api.getPalette();
  state.images = await api.listImages();
  renderPalette();
  renderImageList();
  setStatus(`${state.images.length} images in project`);

  const slider = el<HTMLInputElement>("region-size");
  slider.value = String(state.regionSize);
  el<HTMLElement>("region-size-value").textContent = String(state.regionSize);
  slider.oninput = () => {
    state.regionSize = Number(slider.value);
    el<HTMLElement>("region-size-value").textContent = slider.value;
    void recomputeSuperpixels();
  };

  const brush = el<HTMLInputElement>("brush-size");
  brush.value = String(state.brushRadius);
  brush.oninput = () => {
    state.brushRadius = Number(brush.value);
  };

  el<HTMLSelectElement>("tool-select").onchange = (ev) => {
    state.tool = (ev.target as HTMLSelectElement).value as AppState["tool"];
  };

  const cursor = el<HTMLCanvasElement>("layer-cursor");
  cursor.onmousedown = (ev) => {
    const pos = canvasPos(ev);
    if (!pos) return;
    state.painting = true;
    paintAt(pos.x, pos.y);
  };
  cursor.onmousemove = (ev) => {
    const pos = canvasPos(ev);
    if (!pos) return;
    drawCursor(pos.x, pos.y);
    if (state.painting) paintAt(pos.x, pos.y);
  };
  window.onmouseup = () => {
    state.painting = false;
  };

  el<HTMLElement>("undo-btn").onclick = () => {
    if (state.mask && undoStack.undo(state.mask)) {
      state.dirty = true;
      drawMask();
      refreshDirtyFlag();
    }
  };
  el<HTMLElement>("redo-btn").onclick = () => {
    if (state.mask && undoStack.redo(state.mask)) {
      state.dirty = true;
      drawMask();
      refreshDirtyFlag();
    }
  };
  el<HTMLElement>("smooth-btn").onclick = () => applySmoothing();
  el<HTMLElement>("save-btn").onclick = () => void saveMask();

  window.onkeydown = (ev) => {
    if (ev.key === "z" && (ev.ctrlKey || ev.metaKey)) {
      ev.preventDefault();
      el<HTMLElement>("undo-btn").click();
    } else if (ev.key === "y" && (ev.ctrlKey || ev.metaKey)) {
      ev.preventDefault();
      el<HTMLElement>("redo-btn").click();
    } else if (ev.key === "s" && (ev.ctrlKey || ev.metaKey)) {
      ev.preventDefault();
      void saveMask();
    }
  };
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  startApp().catch((err) => setStatus(`startup failed: ${err}`, true));
}
