/** Software preview compositor.
 *
 * Layers are drawn in painter's order (later layers over earlier ones)
 * onto the background plate.  This mirrors the server's layer order only
 * approximately — the authoritative per-pixel occlusion rule runs server
 * side; the preview favors latency over pixel exactness.
 */

import type { RasterImage } from "./sprites.js";
import type { SpriteCache } from "./sprites.js";
import type { LayerDescriptor } from "./protocol.js";

export class PreviewRenderer {
  private readonly target: Uint8ClampedArray;

  constructor(
    private readonly background: RasterImage,
    private readonly layers: LayerDescriptor[],
    private readonly cache: SpriteCache,
  ) {
    this.target = new Uint8ClampedArray(background.data.length);
  }

  get width(): number {
    return this.background.width;
  }

  get height(): number {
    return this.background.height;
  }

  /**
   * Composite one column's layer frames.  Returns the pixel buffer, or
   * null when any referenced sprite is missing — the column is skipped
   * and the fetches are queued so a later column can draw.
   */
  renderColumn(frames: number[]): Uint8ClampedArray | null {
    if (frames.length !== this.layers.length) {
      throw new Error(
        `column has ${frames.length} frames for ${this.layers.length} layers`,
      );
    }
    const sprites: RasterImage[] = [];
    let missing = false;
    for (let d = 0; d < this.layers.length; d++) {
      const sprite = this.cache.get(this.layers[d].actor, frames[d]);
      if (!sprite) {
        void this.cache.request(this.layers[d].actor, frames[d]);
        missing = true;
      } else {
        sprites.push(sprite);
      }
    }
    if (missing) return null;

    this.target.set(this.background.data);
    for (const sprite of sprites) blitOver(this.target, this.width, sprite);
    return this.target;
  }
}

/** Alpha-blend `sprite` over `dst` (same canvas size, sprite at 0,0). */
export function blitOver(
  dst: Uint8ClampedArray,
  dstWidth: number,
  sprite: RasterImage,
): void {
  const src = sprite.data;
  const rows = sprite.height;
  const cols = Math.min(sprite.width, dstWidth);
  for (let y = 0; y < rows; y++) {
    let si = y * sprite.width * 4;
    let di = y * dstWidth * 4;
    for (let x = 0; x < cols; x++) {
      const a = src[si + 3];
      if (a === 255) {
        dst[di] = src[si];
        dst[di + 1] = src[si + 1];
        dst[di + 2] = src[si + 2];
      } else if (a > 0) {
        const ia = 255 - a;
        dst[di] = (src[si] * a + dst[di] * ia + 127) / 255;
        dst[di + 1] = (src[si + 1] * a + dst[di + 1] * ia + 127) / 255;
        dst[di + 2] = (src[si + 2] * a + dst[di + 2] * ia + 127) / 255;
      }
      si += 4;
      di += 4;
    }
  }
}

export function solidImage(
  width: number,
  height: number,
  rgba: [number, number, number, number],
): RasterImage {
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < data.length; i += 4) {
    data[i] = rgba[0];
    data[i + 1] = rgba[1];
    data[i + 2] = rgba[2];
    data[i + 3] = rgba[3];
  }
  return { width, height, data };
}
