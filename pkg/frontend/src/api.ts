/** REST client for the annotation service; the only network surface. */

export interface PaletteEntry {
  index: number;
  name: string;
  color: [number, number, number];
}

export interface ImageInfo {
  id: string;
  width: number;
  height: number;
  has_mask: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectOk(res: Response): Promise<Response> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // non-JSON error body
    }
    throw new ApiError(res.status, detail);
  }
  return res;
}

export class AnnotationApi {
  constructor(private readonly base = "") {}

  async getPalette(): Promise<PaletteEntry[]> {
    const res = await expectOk(await fetch(`${this.base}/api/palette`));
    return (await res.json()).labels;
  }

  async listImages(): Promise<ImageInfo[]> {
    const res = await expectOk(await fetch(`${this.base}/api/images`));
    return res.json();
  }

  imageUrl(id: string): string {
    return `${this.base}/api/images/${encodeURIComponent(id)}`;
  }

  /** null when the server has no mask for this image yet. */
  async getMaskPng(id: string): Promise<Uint8Array | null> {
    const res = await fetch(`${this.base}/api/masks/${encodeURIComponent(id)}`);
    if (res.status === 404) return null;
    await expectOk(res);
    return new Uint8Array(await res.arrayBuffer());
  }

  async putMaskPng(id: string, png: Uint8Array): Promise<void> {
    const body = new Uint8Array(png).buffer as ArrayBuffer;
    const res = await fetch(`${this.base}/api/masks/${encodeURIComponent(id)}`, {
      method: "PUT",
      body,
      headers: { "Content-Type": "image/png" },
    });
    await expectOk(res);
  }
}
