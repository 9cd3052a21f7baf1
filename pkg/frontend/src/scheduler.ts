/**
 * Superpixel recompute scheduling with a generation counter: slider moves
 * can fire faster than SLIC finishes, and only the newest request may land.
 * Runs in a Worker when one is supplied, synchronously otherwise (tests,
 * older browsers).
 */

import { SlicConfig, SuperpixelMap, slic } from "./slic.js";

export interface SlicRequest {
  data: Uint8Array | Uint8ClampedArray;
  width: number;
  height: number;
  cfg: SlicConfig;
  channels: 3 | 4;
}

export type SlicRunner = (req: SlicRequest) => Promise<SuperpixelMap>;

export const syncRunner: SlicRunner = async (req) =>
  slic(req.data, req.width, req.height, req.cfg, req.channels);

/** Wrap a module Worker running slic.worker.js into a SlicRunner. */
export function workerRunner(worker: Worker): SlicRunner {
  let seq = 0;
  const pending = new Map<number, (sp: SuperpixelMap) => void>();
  worker.onmessage = (e: MessageEvent) => {
    const { id, width, height, ids, numSegments } = e.data;
    const resolve = pending.get(id);
    if (resolve) {
      pending.delete(id);
      resolve({ width, height, ids: new Int32Array(ids), numSegments });
    }
  };
  return (req) =>
    new Promise((resolve) => {
      const id = ++seq;
      pending.set(id, resolve);
      worker.postMessage({
        id,
        data: req.data,
        width: req.width,
        height: req.height,
        cfg: req.cfg,
        channels: req.channels,
      });
    });
}

export class SlicScheduler {
  private generation = 0;

  constructor(private readonly runner: SlicRunner = syncRunner) {}

  /** Resolves with the map, or null when a newer request superseded this one. */
  async schedule(req: SlicRequest): Promise<SuperpixelMap | null> {
    const mine = ++this.generation;
    const result = await this.runner(req);
    return mine === this.generation ? result : null;
  }
}
