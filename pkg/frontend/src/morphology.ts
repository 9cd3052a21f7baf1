/**
 * Morphology-based mask smoothing: per-label closing-then-opening with a
 * disc, composited per pixel. Same contract as the server implementation:
 * a pixel claimed by exactly one smoothed label map takes it; overlaps go
 * to the label with the most input-mask support inside the disc (ties to
 * the lowest index); unclaimed pixels keep their input label.
 */

import { LabelMask, cloneMask } from "./mask.js";

function discOffsets(radius: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let dy = -radius; dy <= radius; dy++) {
    for (let dx = -radius; dx <= radius; dx++) {
      if (dx * dx + dy * dy <= radius * radius) out.push([dx, dy]);
    }
  }
  return out;
}

/** borderValue fills reads outside the image. */
function dilate(src: Uint8Array, width: number, height: number,
                disc: Array<[number, number]>, borderValue: 0 | 1): Uint8Array {
  const out = new Uint8Array(src.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let hit = 0;
      for (const [dx, dy] of disc) {
        const qx = x + dx, qy = y + dy;
        const v = qx >= 0 && qx < width && qy >= 0 && qy < height
          ? src[qy * width + qx] : borderValue;
        if (v) { hit = 1; break; }
      }
      out[y * width + x] = hit;
    }
  }
  return out;
}

function erode(src: Uint8Array, width: number, height: number,
               disc: Array<[number, number]>, borderValue: 0 | 1): Uint8Array {
  const out = new Uint8Array(src.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let all = 1;
      for (const [dx, dy] of disc) {
        const qx = x + dx, qy = y + dy;
        const v = qx >= 0 && qx < width && qy >= 0 && qy < height
          ? src[qy * width + qx] : borderValue;
        if (!v) { all = 0; break; }
      }
      out[y * width + x] = all;
    }
  }
  return out;
}

export function smoothMask(mask: LabelMask, radius: number): LabelMask {
  if (radius < 0) throw new Error(`radius must be >= 0, got ${radius}`);
  if (radius === 0) return cloneMask(mask);
  const { width, height, data } = mask;
  const disc = discOffsets(radius);

  const present: number[] = [];
  const seen = new Set<number>();
  for (let i = 0; i < data.length; i++) {
    if (!seen.has(data[i])) {
      seen.add(data[i]);
      present.push(data[i]);
    }
  }
  present.sort((a, b) => a - b);

  const out = cloneMask(mask);
  const bestScore = new Int32Array(data.length).fill(-1);
  for (const label of present) {
    const ind = new Uint8Array(data.length);
    for (let i = 0; i < data.length; i++) ind[i] = data[i] === label ? 1 : 0;
    const closed = erode(dilate(ind, width, height, disc, 0), width, height,
                         disc, 1);
    const opened = dilate(erode(closed, width, height, disc, 1), width, height,
                          disc, 0);
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const i = y * width + x;
        if (!opened[i]) continue;
        let support = 0;
        for (const [dx, dy] of disc) {
          const qx = x + dx, qy = y + dy;
          if (qx >= 0 && qx < width && qy >= 0 && qy < height
              && ind[qy * width + qx]) {
            support++;
          }
        }
        if (support > bestScore[i]) {
          bestScore[i] = support;
          out.data[i] = label;
        }
      }
    }
  }
  return out;
}
