/** Wire types of the loopstage performance service.
 *
 * Control channel (text JSON): trigger / param ops, acks echo the server
 * column stamp.  Stream channel (binary): little-endian u64 column id
 * followed by one u32 frame index per layer.
 */

export interface ActionDescriptor {
  id: string;
  key: string;
}

export interface LayerDescriptor {
  id: string;
  actor: string;
  live: boolean;
  actions: ActionDescriptor[];
}

export interface ProjectDescriptor {
  name: string;
  frame_rate: number;
  width: number;
  height: number;
  layers: LayerDescriptor[];
  actors: Record<string, { kind: string; frames: number }>;
}

export type ControlMessage =
  | { op: "trigger"; layer: string; action: string }
  | { op: "param"; name: string; value: number | string }
  | { op: "step"; columns: number };

export type ControlReply =
  | { op: "ack"; column: number }
  | { op: "error"; message: string };

export interface ColumnMessage {
  column: number;
  frames: number[];
}

/** Decode one binary stream message: u64 column + u32 per layer (LE). */
export function decodeColumn(data: ArrayBuffer): ColumnMessage {
  if (data.byteLength < 8 || (data.byteLength - 8) % 4 !== 0) {
    throw new Error(`malformed column message of ${data.byteLength} bytes`);
  }
  const view = new DataView(data);
  const column = Number(view.getBigUint64(0, true));
  const frames: number[] = [];
  for (let off = 8; off < data.byteLength; off += 4) {
    frames.push(view.getUint32(off, true));
  }
  return { column, frames };
}

/** Encode a column message (used by test doubles of the server). */
export function encodeColumn(column: number, frames: number[]): ArrayBuffer {
  const buf = new ArrayBuffer(8 + 4 * frames.length);
  const view = new DataView(buf);
  view.setBigUint64(0, BigInt(column), true);
  frames.forEach((f, i) => view.setUint32(8 + 4 * i, f, true));
  return buf;
}

export function parseControlReply(text: string): ControlReply {
  const msg = JSON.parse(text);
  if (msg.op === "ack" && typeof msg.column === "number") return msg;
  if (msg.op === "error" && typeof msg.message === "string") return msg;
  throw new Error(`unexpected control reply: ${text}`);
}
