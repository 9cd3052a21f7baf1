/**
 * sRGB (D65) to CIELAB, matching the server implementation operation for
 * operation. The Lab values used by clustering are snapped to a 2^-20
 * fixed-point grid so both sides land on identical doubles regardless of
 * last-ulp libm differences; keep every expression's shape in sync with
 * the Python side when editing.
 */

const M00 = 0.4124564, M01 = 0.3575761, M02 = 0.1804375;
const M10 = 0.2126729, M11 = 0.7151522, M12 = 0.0721750;
const M20 = 0.0193339, M21 = 0.1191920, M22 = 0.9503041;

// White point = matrix row sums, so pure white maps exactly to L* = 100.
const WX = M00 + M01 + M02;
const WY = M10 + M11 + M12;
const WZ = M20 + M21 + M22;

const DELTA = 6.0 / 29.0;
const DELTA3 = DELTA ** 3;

export const LAB_QUANT = 1 << 20;

function linearize(c: number): number {
  const v = c / 255.0;
  return v <= 0.04045 ? v / 12.92 : ((v + 0.055) / 1.055) ** 2.4;
}

function labF(t: number): number {
  return t > DELTA3 ? Math.cbrt(t) : t / (3.0 * DELTA * DELTA) + 4.0 / 29.0;
}

export function rgbToLab(r: number, g: number, b: number): [number, number, number] {
  const rl = linearize(r);
  const gl = linearize(g);
  const bl = linearize(b);
  const x = rl * M00 + gl * M01 + bl * M02;
  const y = rl * M10 + gl * M11 + bl * M12;
  const z = rl * M20 + gl * M21 + bl * M22;
  const fx = labF(x / WX);
  const fy = labF(y / WY);
  const fz = labF(z / WZ);
  return [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)];
}

export function quantize(v: number): number {
  return Math.floor(v * LAB_QUANT + 0.5) / LAB_QUANT;
}

/**
 * Quantized Lab planes for a whole RGBA or RGB buffer, row-major.
 * `channels` is 4 for canvas ImageData, 3 for packed RGB.
 */
export function labPlanes(
  data: Uint8Array | Uint8ClampedArray,
  width: number,
  height: number,
  channels: 3 | 4,
): { l: Float64Array; a: Float64Array; b: Float64Array } {
  const n = width * height;
  const l = new Float64Array(n);
  const a = new Float64Array(n);
  const b = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const o = i * channels;
    const lab = rgbToLab(data[o], data[o + 1], data[o + 2]);
    l[i] = quantize(lab[0]);
    a[i] = quantize(lab[1]);
    b[i] = quantize(lab[2]);
  }
  return { l, a, b };
}
