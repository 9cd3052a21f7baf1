/**
 * In-memory label mask and paint patches. The mask is per-pixel state; the
 * superpixels are only an interaction aid, so different resolutions never
 * need to share boundaries. Every paint returns the inverse patch for the
 * undo stack.
 */

export interface LabelMask {
  width: number;
  height: number;
  data: Uint8Array; // row-major label indices
}

export interface Patch {
  /** pixel indices touched, with their values before the paint */
  indices: Int32Array;
  before: Uint8Array;
  after: Uint8Array;
}

export function createMask(width: number, height: number): LabelMask {
  return { width, height, data: new Uint8Array(width * height) };
}

export function cloneMask(mask: LabelMask): LabelMask {
  return { width: mask.width, height: mask.height, data: Uint8Array.from(mask.data) };
}

export function validateMask(mask: LabelMask, numLabels: number): void {
  if (mask.data.length !== mask.width * mask.height) {
    throw new Error("mask buffer does not match its dimensions");
  }
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i] >= numLabels) {
      throw new Error(`mask value ${mask.data[i]} >= label count ${numLabels}`);
    }
  }
}

/** Paint the given pixel indices; returns the patch (empty if no-op). */
export function paintPixels(mask: LabelMask, pixels: Iterable<number>,
                            label: number): Patch {
  const touched: number[] = [];
  const before: number[] = [];
  for (const i of pixels) {
    if (mask.data[i] !== label) {
      touched.push(i);
      before.push(mask.data[i]);
      mask.data[i] = label;
    }
  }
  return {
    indices: Int32Array.from(touched),
    before: Uint8Array.from(before),
    after: new Uint8Array(touched.length).fill(label),
  };
}

/** All pixel indices of one superpixel id. */
export function superpixelPixels(ids: Int32Array, id: number): number[] {
  const out: number[] = [];
  for (let i = 0; i < ids.length; i++) {
    if (ids[i] === id) out.push(i);
  }
  return out;
}

/** Disc brush around (cx, cy), clipped to the mask. */
export function brushPixels(mask: LabelMask, cx: number, cy: number,
                            radius: number): number[] {
  const out: number[] = [];
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.ceil(cx - radius));
  const x1 = Math.min(mask.width - 1, Math.floor(cx + radius));
  const y0 = Math.max(0, Math.ceil(cy - radius));
  const y1 = Math.min(mask.height - 1, Math.floor(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) out.push(y * mask.width + x);
    }
  }
  return out;
}

export function applyPatch(mask: LabelMask, patch: Patch, reverse: boolean): void {
  const values = reverse ? patch.before : patch.after;
  for (let k = 0; k < patch.indices.length; k++) {
    mask.data[patch.indices[k]] = values[k];
  }
}
