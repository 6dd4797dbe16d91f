import type { ProjectDescriptor } from "../src/protocol.js";
import type { RasterImage } from "../src/sprites.js";
import { SpriteCache } from "../src/sprites.js";

export function solid(
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

export function toyProject(
  nLayers = 2,
  framesPerActor = 4,
  live = true,
): ProjectDescriptor {
  const layers = [];
  const actors: ProjectDescriptor["actors"] = {};
  for (let d = 0; d < nLayers; d++) {
    const actor = `actor${d}`;
    actors[actor] = { kind: "full-frame", frames: framesPerActor };
    layers.push({
      id: `L${d}`,
      actor,
      live,
      actions: [
        { id: "a0", key: String(2 * d) },
        { id: "a1", key: String(2 * d + 1) },
      ],
    });
  }
  return {
    name: "toy",
    frame_rate: 30,
    width: 8,
    height: 6,
    layers,
    actors,
  };
}

/** Cache whose fetcher yields per-(actor,frame) colored sprites. */
export function instantCache(
  width: number,
  height: number,
  alpha = 255,
): SpriteCache {
  return new SpriteCache(async (actor, frame) => {
    const hue = (actor.charCodeAt(actor.length - 1) * 40 + frame * 10) % 256;
    return solid(width, height, [hue, 255 - hue, frame % 256, alpha]);
  });
}
