/**
 * Minimal 8-bit grayscale PNG encoder (and a decoder for its own output).
 *
 * Canvas cannot export single-channel PNGs, and the mask format is 8-bit
 * grayscale with pixel value = label index, so the client encodes masks
 * itself. The zlib stream uses stored (uncompressed) deflate blocks, which
 * every standard decoder accepts; masks are small enough that compression
 * is not worth a dependency.
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1, b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32(v: number): number[] {
  return [(v >>> 24) & 0xff, (v >>> 16) & 0xff, (v >>> 8) & 0xff, v & 0xff];
}

function chunk(type: string, payload: Uint8Array): number[] {
  const typed = new Uint8Array(4 + payload.length);
  for (let i = 0; i < 4; i++) typed[i] = type.charCodeAt(i);
  typed.set(payload, 4);
  return [...u32(payload.length), ...typed, ...u32(crc32(typed))];
}

/** zlib-wrap raw bytes as stored deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: number[] = [0x78, 0x01];
  const MAX = 65535;
  for (let off = 0; off < raw.length; off += MAX) {
    const len = Math.min(MAX, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    blocks.push(final, len & 0xff, (len >> 8) & 0xff,
                (~len) & 0xff, ((~len) >> 8) & 0xff);
    for (let i = 0; i < len; i++) blocks.push(raw[off + i]);
  }
  blocks.push(...u32(adler32(raw)));
  return Uint8Array.from(blocks);
}

export function encodeGrayPng(data: Uint8Array, width: number,
                              height: number): Uint8Array {
  if (data.length !== width * height) {
    throw new Error("buffer does not match dimensions");
  }
  const ihdr = new Uint8Array([...u32(width), ...u32(height),
                               8, 0, 0, 0, 0]); // bit depth 8, grayscale
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(data.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  return Uint8Array.from([
    ...SIGNATURE,
    ...chunk("IHDR", ihdr),
    ...chunk("IDAT", zlibStored(raw)),
    ...chunk("IEND", new Uint8Array(0)),
  ]);
}

/** Decode a PNG produced by encodeGrayPng (stored blocks, filter 0 only). */
export function decodeGrayPng(bytes: Uint8Array): {
  width: number; height: number; data: Uint8Array;
} {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let off = 8;
  let width = 0, height = 0;
  const idat: number[] = [];
  while (off < bytes.length) {
    const len = (bytes[off] << 24 | bytes[off + 1] << 16 | bytes[off + 2] << 8
                 | bytes[off + 3]) >>> 0;
    const type = String.fromCharCode(bytes[off + 4], bytes[off + 5],
                                     bytes[off + 6], bytes[off + 7]);
    const payload = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = (payload[0] << 24 | payload[1] << 16 | payload[2] << 8
               | payload[3]) >>> 0;
      height = (payload[4] << 24 | payload[5] << 16 | payload[6] << 8
                | payload[7]) >>> 0;
      if (payload[8] !== 8 || payload[9] !== 0) {
        throw new Error("only 8-bit grayscale supported");
      }
    } else if (type === "IDAT") {
      idat.push(...payload);
    }
    off += 12 + len;
  }
  const z = Uint8Array.from(idat);
  // stored-deflate inflate
  const raw: number[] = [];
  let p = 2;
  for (;;) {
    const final = z[p] & 1;
    if ((z[p] >> 1) !== 0) throw new Error("only stored blocks supported");
    const len = z[p + 1] | (z[p + 2] << 8);
    p += 5;
    for (let i = 0; i < len; i++) raw.push(z[p + i]);
    p += len;
    if (final) break;
  }
  const data = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("unsupported filter");
    for (let x = 0; x < width; x++) {
      data[y * width + x] = raw[y * (width + 1) + 1 + x];
    }
  }
  return { width, height, data };
}
