/** Sprite cache with live-layer prefetch and lazy fetch on miss. */

export interface RasterImage {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8ClampedArray;
}

export type SpriteFetcher = (actor: string, frame: number) => Promise<RasterImage>;

function keyOf(actor: string, frame: number): string {
  return `${actor}/${frame}`;
}

export class SpriteCache {
  private readonly images = new Map<string, RasterImage>();
  private readonly inFlight = new Map<string, Promise<void>>();

  constructor(private readonly fetcher: SpriteFetcher) {}

  get(actor: string, frame: number): RasterImage | undefined {
    return this.images.get(keyOf(actor, frame));
  }

  has(actor: string, frame: number): boolean {
    return this.images.has(keyOf(actor, frame));
  }

  /** Queue a fetch for a missing sprite; duplicate requests coalesce. */
  request(actor: string, frame: number): Promise<void> {
    const key = keyOf(actor, frame);
    if (this.images.has(key)) return Promise.resolve();
    const pending = this.inFlight.get(key);
    if (pending) return pending;
    const p = this.fetcher(actor, frame)
      .then((img) => {
        this.images.set(key, img);
      })
      .finally(() => {
        this.inFlight.delete(key);
      });
    this.inFlight.set(key, p);
    return p;
  }

  /** Fetch every frame of an actor (used for layers marked live). */
  prefetchActor(actor: string, frames: number): Promise<void> {
    const all: Promise<void>[] = [];
    for (let f = 0; f < frames; f++) all.push(this.request(actor, f));
    return Promise.all(all).then(() => undefined);
  }

  /** True once every frame of every given actor is decoded and cached. */
  isWarm(actors: Iterable<[string, number]>): boolean {
    for (const [actor, frames] of actors) {
      for (let f = 0; f < frames; f++) {
        if (!this.images.has(keyOf(actor, f))) return false;
      }
    }
    return true;
  }

  get size(): number {
    return this.images.size;
  }
}
