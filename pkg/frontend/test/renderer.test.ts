import { describe, expect, it } from "vitest";

import { PreviewRenderer, blitOver } from "../src/renderer.js";
import { SpriteCache } from "../src/sprites.js";
import { solid, toyProject } from "./helpers.js";

const W = 8;
const H = 6;

function pixel(buf: Uint8ClampedArray, x: number, y: number): number[] {
  const i = (y * W + x) * 4;
  return [buf[i], buf[i + 1], buf[i + 2]];
}

describe("preview renderer", () => {
  it("zero-layer column shows the background only", () => {
    const project = toyProject(0);
    const bg = solid(W, H, [10, 20, 30, 255]);
    const cache = new SpriteCache(async () => solid(W, H, [0, 0, 0, 0]));
    const renderer = new PreviewRenderer(bg, project.layers, cache);
    const out = renderer.renderColumn([]);
    expect(out).not.toBeNull();
    expect([...out!]).toEqual([...bg.data]);
  });

  it("draws layers in painter's order (later layers on top)", async () => {
    const project = toyProject(2);
    const bg = solid(W, H, [0, 0, 0, 255]);
    const sprites: Record<string, [number, number, number, number]> = {
      actor0: [255, 0, 0, 255],
      actor1: [0, 255, 0, 255],
    };
    const cache = new SpriteCache(async (actor) => solid(W, H, sprites[actor]));
    await cache.prefetchActor("actor0", 1);
    await cache.prefetchActor("actor1", 1);
    const renderer = new PreviewRenderer(bg, project.layers, cache);
    const out = renderer.renderColumn([0, 0])!;
    expect(pixel(out, 3, 3)).toEqual([0, 255, 0]);
  });

  it("respects sprite alpha outside the mask", async () => {
    const project = toyProject(1);
    const bg = solid(W, H, [10, 10, 10, 255]);
    const sprite = solid(W, H, [200, 0, 0, 255]);
    // make the right half transparent
    for (let y = 0; y < H; y++) {
      for (let x = W / 2; x < W; x++) {
        sprite.data[(y * W + x) * 4 + 3] = 0;
      }
    }
    const cache = new SpriteCache(async () => sprite);
    await cache.request("actor0", 0);
    const renderer = new PreviewRenderer(bg, project.layers, cache);
    const out = renderer.renderColumn([0])!;
    expect(pixel(out, 1, 1)).toEqual([200, 0, 0]);
    expect(pixel(out, W - 1, 1)).toEqual([10, 10, 10]);
  });

  it("skips a column on cache miss and queues the fetch", async () => {
    const project = toyProject(1);
    const bg = solid(W, H, [0, 0, 0, 255]);
    let fetched = 0;
    const cache = new SpriteCache(async () => {
      fetched += 1;
      return solid(W, H, [1, 1, 1, 255]);
    });
    const renderer = new PreviewRenderer(bg, project.layers, cache);
    expect(renderer.renderColumn([2])).toBeNull();
    await new Promise((r) => setTimeout(r, 0));
    expect(fetched).toBe(1);
    expect(renderer.renderColumn([2])).not.toBeNull();
  });

  it("rejects a frame-count mismatch", () => {
    const project = toyProject(2);
    const bg = solid(W, H, [0, 0, 0, 255]);
    const cache = new SpriteCache(async () => solid(W, H, [0, 0, 0, 255]));
    const renderer = new PreviewRenderer(bg, project.layers, cache);
    expect(() => renderer.renderColumn([0])).toThrow(/2 layers/);
  });
});

describe("blitOver", () => {
  it("blends half-alpha sprites", () => {
    const dst = solid(1, 1, [0, 0, 0, 255]).data;
    blitOver(dst, 1, solid(1, 1, [255, 255, 255, 128]));
    expect(dst[0]).toBeGreaterThan(120);
    expect(dst[0]).toBeLessThan(136);
  });
});
