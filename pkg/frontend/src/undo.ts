/** Undo/redo as exact inverse patches: undo(paint) restores the mask
 * bit-for-bit. Redo history clears on a fresh paint. */

import { LabelMask, Patch, applyPatch } from "./mask.js";

export class UndoStack {
  private undos: Patch[] = [];
  private redos: Patch[] = [];

  constructor(private readonly limit = 200) {}

  push(patch: Patch): void {
    if (patch.indices.length === 0) return;
    this.undos.push(patch);
    if (this.undos.length > this.limit) this.undos.shift();
    this.redos.length = 0;
  }

  undo(mask: LabelMask): boolean {
    const patch = this.undos.pop();
    if (!patch) return false;
    applyPatch(mask, patch, true);
    this.redos.push(patch);
    return true;
  }

  redo(mask: LabelMask): boolean {
    const patch = this.redos.pop();
    if (!patch) return false;
    applyPatch(mask, patch, false);
    this.undos.push(patch);
    return true;
  }

  get canUndo(): boolean {
    return this.undos.length > 0;
  }

  get canRedo(): boolean {
    return this.redos.length > 0;
  }

  clear(): void {
    this.undos.length = 0;
    this.redos.length = 0;
  }
}
