/** Keyboard bindings: one key per (layer, action), deduped on repeat. */

import type { ProjectDescriptor } from "./protocol.js";

export interface KeyTarget {
  layer: string;
  action: string;
}

export const KEY_REPEAT_DEDUPE_MS = 50;

export class KeyBindings {
  private readonly bindings = new Map<string, KeyTarget>();
  private readonly lastPress = new Map<string, number>();

  constructor(project: ProjectDescriptor) {
    for (const layer of project.layers) {
      for (const action of layer.actions) {
        if (!action.key) continue;
        // a key may be shared by layers only via distinct bound keys;
        // duplicate keys would make a press ambiguous
        const existing = this.bindings.get(action.key);
        if (existing) {
          throw new Error(
            `key "${action.key}" bound to both ` +
              `${existing.layer}/${existing.action} and ` +
              `${layer.id}/${action.id}`,
          );
        }
        this.bindings.set(action.key, { layer: layer.id, action: action.id });
      }
    }
  }

  lookup(key: string): KeyTarget | undefined {
    return this.bindings.get(key);
  }

  /**
   * Resolve a key press to a trigger target.  Unbound keys are no-ops;
   * a repeat of the same key within KEY_REPEAT_DEDUPE_MS is swallowed so
   * one gesture emits at most one control message.
   */
  press(key: string, nowMs: number): KeyTarget | null {
    const target = this.bindings.get(key);
    if (!target) return null;
    const last = this.lastPress.get(key);
    if (last !== undefined && nowMs - last < KEY_REPEAT_DEDUPE_MS) {
      return null;
    }
    this.lastPress.set(key, nowMs);
    return target;
  }
}
