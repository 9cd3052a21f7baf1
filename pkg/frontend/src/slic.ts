/**
 * SLIC superpixels: grid-seeded local k-means over (quantized Lab, x, y).
 *
 * This mirrors the server implementation exactly; the shared JSON fixtures
 * assert identical integer id maps. The contract pinned by both sides:
 * strict-< assignment with centers visited in id order, closed 2S x 2S
 * search windows via ceil/floor, per-cluster sums accumulated in row-major
 * pixel order, means as one division, ids compacted by first appearance,
 * and undersized 4-connected components absorbed into their largest
 * neighbour (snapshot sizes, ties to the smaller component number) until
 * stable.
 */

import { labPlanes } from "./color.js";

export interface SlicConfig {
  regionSize: number;
  compactness: number;
  iterations: number;
  minRegionFraction: number;
}

export const DEFAULT_SLIC: SlicConfig = {
  regionSize: 16,
  compactness: 10.0,
  iterations: 10,
  minRegionFraction: 0.25,
};

export interface SuperpixelMap {
  width: number;
  height: number;
  ids: Int32Array; // row-major, compact 0..K-1
  numSegments: number;
}

export function computeSlic(
  data: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  cfg: SlicConfig,
  channels: 3 | 4 = 4,
): SuperpixelMap {
  const S = cfg.regionSize;
  if (S < 2) throw new Error(`region size must be >= 2, got ${S}`);
  if (width < S || height < S) {
    throw new Error(`image ${width}x${height} smaller than one ${S}px region`);
  }
  const n = width * height;
  const { l: labL, a: labA, b: labB } = labPlanes(data, width, height, channels);

  // Gradient for seed perturbation: squared Lab difference of the two
  // horizontal neighbours plus the two vertical ones, replicate border.
  const grad = new Float64Array(n);
  for (let y = 0; y < height; y++) {
    const ym = Math.max(y - 1, 0) * width;
    const yp = Math.min(y + 1, height - 1) * width;
    const row = y * width;
    for (let x = 0; x < width; x++) {
      const xm = row + Math.max(x - 1, 0);
      const xp = row + Math.min(x + 1, width - 1);
      const dl = labL[xp] - labL[xm];
      const da = labA[xp] - labA[xm];
      const db = labB[xp] - labB[xm];
      const gl = labL[yp + x] - labL[ym + x];
      const ga = labA[yp + x] - labA[ym + x];
      const gb = labB[yp + x] - labB[ym + x];
      grad[row + x] = (dl * dl + da * da + db * db) + (gl * gl + ga * ga + gb * gb);
    }
  }

  const nx = Math.ceil(width / S);
  const ny = Math.ceil(height / S);
  const stepX = width / nx;
  const stepY = height / ny;
  const K = nx * ny;
  const cx = new Float64Array(K);
  const cy = new Float64Array(K);
  const cL = new Float64Array(K);
  const cA = new Float64Array(K);
  const cB = new Float64Array(K);
  let k = 0;
  for (let gy = 0; gy < ny; gy++) {
    for (let gx = 0; gx < nx; gx++) {
      const sx = Math.floor((gx + 0.5) * stepX);
      const sy = Math.floor((gy + 0.5) * stepY);
      let bx = sx, by = sy, bg = grad[sy * width + sx];
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          const qx = sx + dx, qy = sy + dy;
          if (qx >= 0 && qx < width && qy >= 0 && qy < height
              && grad[qy * width + qx] < bg) {
            bg = grad[qy * width + qx];
            bx = qx;
            by = qy;
          }
        }
      }
      cx[k] = bx;
      cy[k] = by;
      cL[k] = labL[by * width + bx];
      cA[k] = labA[by * width + bx];
      cB[k] = labB[by * width + bx];
      k++;
    }
  }

  const S2 = S * S;
  const m2 = cfg.compactness * cfg.compactness;
  const labels = new Int32Array(n);
  const dist = new Float64Array(n);
  const sums = new Float64Array(K * 5);
  const cnts = new Float64Array(K);

  for (let it = 0; it < cfg.iterations; it++) {
    dist.fill(Infinity);
    labels.fill(-1);
    for (let c = 0; c < K; c++) {
      const x0 = Math.max(0, Math.ceil(cx[c] - S));
      const x1 = Math.min(width - 1, Math.floor(cx[c] + S));
      const y0 = Math.max(0, Math.ceil(cy[c] - S));
      const y1 = Math.min(height - 1, Math.floor(cy[c] + S));
      for (let y = y0; y <= y1; y++) {
        const row = y * width;
        const dyv = y - cy[c];
        for (let x = x0; x <= x1; x++) {
          const i = row + x;
          const dl = labL[i] - cL[c];
          const da = labA[i] - cA[c];
          const db = labB[i] - cB[c];
          const dlab2 = dl * dl + da * da + db * db;
          const dxv = x - cx[c];
          const dxy2 = dxv * dxv + dyv * dyv;
          const d2 = dlab2 + (dxy2 / S2) * m2;
          if (d2 < dist[i]) {
            dist[i] = d2;
            labels[i] = c;
          }
        }
      }
    }

    // Windows can drift off a pixel; fall back to the spatially nearest
    // center with the same strict-< rule.
    for (let i = 0; i < n; i++) {
      if (labels[i] >= 0) continue;
      const px = i % width;
      const py = (i - px) / width;
      let best = Infinity;
      let pick = 0;
      for (let c = 0; c < K; c++) {
        const dxv = px - cx[c];
        const dyv = py - cy[c];
        const d2 = dxv * dxv + dyv * dyv;
        if (d2 < best) {
          best = d2;
          pick = c;
        }
      }
      labels[i] = pick;
    }

    sums.fill(0);
    cnts.fill(0);
    for (let y = 0; y < height; y++) {
      const row = y * width;
      for (let x = 0; x < width; x++) {
        const i = row + x;
        const c = labels[i] * 5;
        sums[c] += labL[i];
        sums[c + 1] += labA[i];
        sums[c + 2] += labB[i];
        sums[c + 3] += x;
        sums[c + 4] += y;
        cnts[labels[i]]++;
      }
    }
    for (let c = 0; c < K; c++) {
      if (cnts[c] > 0) {
        cL[c] = sums[c * 5] / cnts[c];
        cA[c] = sums[c * 5 + 1] / cnts[c];
        cB[c] = sums[c * 5 + 2] / cnts[c];
        cx[c] = sums[c * 5 + 3] / cnts[c];
        cy[c] = sums[c * 5 + 4] / cnts[c];
      }
    }
  }

  const compact = compactByFirstAppearance(labels);
  return { width, height, ids: compact.ids, numSegments: compact.count };
}

function compactByFirstAppearance(labels: Int32Array): { ids: Int32Array; count: number } {
  const remap = new Map<number, number>();
  const out = new Int32Array(labels.length);
  for (let i = 0; i < labels.length; i++) {
    let mapped = remap.get(labels[i]);
    if (mapped === undefined) {
      mapped = remap.size;
      remap.set(labels[i], mapped);
    }
    out[i] = mapped;
  }
  return { ids: out, count: remap.size };
}

/** 4-connected components of equal-id regions, numbered by first raster
 * appearance. */
function components(ids: Int32Array, width: number, height: number): {
  comp: Int32Array; count: number; sizes: number[]; compId: number[];
} {
  const n = width * height;
  const comp = new Int32Array(n).fill(-1);
  const stack: number[] = [];
  const sizes: number[] = [];
  const compId: number[] = [];
  let count = 0;
  for (let start = 0; start < n; start++) {
    if (comp[start] >= 0) continue;
    const target = ids[start];
    const me = count++;
    sizes.push(0);
    compId.push(target);
    comp[start] = me;
    stack.push(start);
    while (stack.length) {
      const i = stack.pop()!;
      sizes[me]++;
      const x = i % width;
      const y = (i - x) / width;
      if (x > 0 && comp[i - 1] < 0 && ids[i - 1] === target) { comp[i - 1] = me; stack.push(i - 1); }
      if (x + 1 < width && comp[i + 1] < 0 && ids[i + 1] === target) { comp[i + 1] = me; stack.push(i + 1); }
      if (y > 0 && comp[i - width] < 0 && ids[i - width] === target) { comp[i - width] = me; stack.push(i - width); }
      if (y + 1 < height && comp[i + width] < 0 && ids[i + width] === target) { comp[i + width] = me; stack.push(i + width); }
    }
  }
  return { comp, count, sizes, compId };
}

export function enforceConnectivity(sp: SuperpixelMap, cfg: SlicConfig): SuperpixelMap {
  const { width, height } = sp;
  const threshold = cfg.minRegionFraction * cfg.regionSize * cfg.regionSize;
  let labels = Int32Array.from(sp.ids);

  for (;;) {
    const { comp, count, sizes, compId } = components(labels, width, height);

    const neighbours: Array<Set<number>> = Array.from({ length: count },
                                                      () => new Set());
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const i = y * width + x;
        if (x + 1 < width && comp[i] !== comp[i + 1]) {
          neighbours[comp[i]].add(comp[i + 1]);
          neighbours[comp[i + 1]].add(comp[i]);
        }
        if (y + 1 < height && comp[i] !== comp[i + width]) {
          neighbours[comp[i]].add(comp[i + width]);
          neighbours[comp[i + width]].add(comp[i]);
        }
      }
    }

    const current = compId.slice();
    let merged = false;
    for (let c = 0; c < count; c++) {
      if (sizes[c] >= threshold || neighbours[c].size === 0) continue;
      let target = -1;
      for (const q of [...neighbours[c]].sort((a, b) => a - b)) {
        if (target < 0 || sizes[q] > sizes[target]) target = q;
      }
      current[c] = current[target];
      merged = true;
    }
    if (!merged) break;
    const next = new Int32Array(labels.length);
    for (let i = 0; i < labels.length; i++) next[i] = current[comp[i]];
    labels = next;
  }

  const { comp } = components(labels, width, height);
  const compact = compactByFirstAppearance(comp);
  return { width, height, ids: compact.ids, numSegments: compact.count };
}

export function slic(
  data: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  cfg: SlicConfig,
  channels: 3 | 4 = 4,
): SuperpixelMap {
  return enforceConnectivity(computeSlic(data, width, height, cfg, channels), cfg);
}

/** Pixels whose right or lower neighbour has a different id. */
export function boundaryMask(sp: SuperpixelMap): Uint8Array {
  const { width, height, ids } = sp;
  const out = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      if (x + 1 < width && ids[i] !== ids[i + 1]) out[i] = 1;
      if (y + 1 < height && ids[i] !== ids[i + width]) out[i] = 1;
    }
  }
  return out;
}
