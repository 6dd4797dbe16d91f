/** Console state machine: wires keys, control channel, stream, preview. */

import { KeyBindings } from "./keys.js";
import type {
  ControlMessage,
  ProjectDescriptor,
} from "./protocol.js";
import { decodeColumn, parseControlReply } from "./protocol.js";
import type { PreviewRenderer } from "./renderer.js";
import type { SpriteCache } from "./sprites.js";

export type ConnectionState = "connecting" | "open" | "closed";

/** Minimal outbound channel; real WebSocket and test doubles both fit. */
export interface ControlChannel {
  send(text: string): void;
  readonly isOpen: boolean;
}

export interface PendingTrigger {
  action: string;
  sentAtMs: number;
}

export interface ConsoleOptions {
  project: ProjectDescriptor;
  control: ControlChannel;
  cache: SpriteCache;
  renderer: PreviewRenderer;
  /** Called with the composited pixels whenever a column is drawn. */
  present?: (pixels: Uint8ClampedArray, column: number) => void;
  now?: () => number;
}

export class PerformanceConsole {
  readonly project: ProjectDescriptor;
  readonly keys: KeyBindings;
  connection: ConnectionState = "connecting";
  selectedLayer: string;
  recording = false;
  /** Last column received from the stream; the UI never shows more. */
  currentColumn = -1;
  /** Per-layer action awaiting a server ack. */
  readonly pending = new Map<string, PendingTrigger>();
  /** Messages composed while disconnected, flushed on reconnect. */
  readonly outbox: ControlMessage[] = [];
  readonly warnings: string[] = [];
  droppedColumns = 0;

  private readonly control: ControlChannel;
  private readonly cache: SpriteCache;
  private readonly renderer: PreviewRenderer;
  private readonly present?: ConsoleOptions["present"];
  private readonly now: () => number;

  constructor(opts: ConsoleOptions) {
    this.project = opts.project;
    this.keys = new KeyBindings(opts.project);
    this.control = opts.control;
    this.cache = opts.cache;
    this.renderer = opts.renderer;
    this.present = opts.present;
    this.now = opts.now ?? (() => Date.now());
    this.selectedLayer = opts.project.layers[0]?.id ?? "";
  }

  // -- readiness -----------------------------------------------------------

  /** Actors of layers marked live, with their frame counts. */
  private liveActors(): [string, number][] {
    const seen = new Map<string, number>();
    for (const layer of this.project.layers) {
      if (!layer.live) continue;
      seen.set(layer.actor, this.project.actors[layer.actor].frames);
    }
    return [...seen.entries()];
  }

  /** Prefetch every frame of live layers; others load lazily on miss. */
  prefetch(): Promise<void> {
    return Promise.all(
      this.liveActors().map(([actor, frames]) =>
        this.cache.prefetchActor(actor, frames),
      ),
    ).then(() => undefined);
  }

  /** Triggers stay disabled until the visible (live) layers are warm. */
  get triggersEnabled(): boolean {
    return this.cache.isWarm(this.liveActors());
  }

  // -- commands ------------------------------------------------------------

  selectLayer(layerId: string): void {
    if (!this.project.layers.some((l) => l.id === layerId)) {
      throw new Error(`unknown layer ${layerId}`);
    }
    this.selectedLayer = layerId;
  }

  /** A key press resolves through the bindings; unbound keys are no-ops. */
  pressKey(key: string): boolean {
    const target = this.keys.press(key, this.now());
    if (!target) return false;
    this.trigger(target.layer, target.action);
    return true;
  }

  trigger(layer: string, action: string): void {
    if (!this.triggersEnabled) {
      this.warnings.push(`trigger ${layer}/${action} ignored: sprites warming`);
      return;
    }
    this.pending.set(layer, { action, sentAtMs: this.now() });
    this.sendOrQueue({ op: "trigger", layer, action });
  }

  setParam(name: string, value: number | string): void {
    this.sendOrQueue({ op: "param", name, value });
  }

  setRecording(on: boolean): void {
    this.recording = on;
  }

  private sendOrQueue(msg: ControlMessage): void {
    if (this.control.isOpen) {
      this.control.send(JSON.stringify(msg));
    } else {
      this.outbox.push(msg);
      this.warnings.push(`disconnected: queued ${msg.op}`);
    }
  }

  // -- channel events ------------------------------------------------------

  handleOpen(): void {
    this.connection = "open";
    while (this.outbox.length > 0) {
      this.control.send(JSON.stringify(this.outbox.shift()));
    }
  }

  handleClose(): void {
    this.connection = "closed";
  }

  handleControlMessage(text: string): void {
    const reply = parseControlReply(text);
    if (reply.op === "ack") {
      // the ack's column stamp confirms the oldest pending trigger
      const oldest = [...this.pending.entries()].sort(
        (a, b) => a[1].sentAtMs - b[1].sentAtMs,
      )[0];
      if (oldest) this.pending.delete(oldest[0]);
    } else {
      this.warnings.push(`server error: ${reply.message}`);
    }
  }

  /**
   * One stream message = one column.  The displayed column only moves to
   * columns actually received (no extrapolation); columns whose sprites
   * are not cached yet are skipped and the fetches queued.
   */
  handleStreamMessage(data: ArrayBuffer): void {
    const { column, frames } = decodeColumn(data);
    if (column > this.currentColumn) this.currentColumn = column;
    const pixels = this.renderer.renderColumn(frames);
    if (pixels === null) {
      this.droppedColumns += 1;
      return;
    }
    this.present?.(pixels, column);
  }
}
