// Worker wrapper: superpixel recomputes off the UI thread.
// Receives { id, data, width, height, cfg, channels }, replies with the
// integer id map; the scheduler's generation counter discards stale results.

import { slic } from "./slic.js";

self.onmessage = (e: MessageEvent) => {
  const { id, data, width, height, cfg, channels } = e.data;
  const sp = slic(data, width, height, cfg, channels);
  (self as unknown as Worker).postMessage(
    { id, width: sp.width, height: sp.height, ids: sp.ids.buffer,
      numSegments: sp.numSegments },
    [sp.ids.buffer],
  );
};
