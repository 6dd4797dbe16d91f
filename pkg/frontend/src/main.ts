/** Browser bootstrap: connects the console to a running service and
 * builds the minimal DOM instrument (trigger buttons with key bindings,
 * parameter sliders, layer selection, recording controls).
 */

import { ServiceClient } from "./client.js";
import { PerformanceConsole } from "./console.js";
import { PreviewRenderer } from "./renderer.js";
import type { RasterImage } from "./sprites.js";
import { SpriteCache } from "./sprites.js";

async function decodePng(bytes: ArrayBuffer): Promise<RasterImage> {
  const bitmap = await createImageBitmap(new Blob([bytes]));
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const img = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return { width: img.width, height: img.height, data: img.data };
}

export async function startConsole(
  baseUrl: string,
  root: HTMLElement,
): Promise<PerformanceConsole> {
  const client = new ServiceClient(baseUrl);
  const project = await client.project();
  const background = await decodePng(await client.backgroundPng());

  const cache = new SpriteCache((actor, frame) =>
    client.spritePng(actor, frame).then(decodePng),
  );
  const renderer = new PreviewRenderer(background, project.layers, cache);

  const canvas = document.createElement("canvas");
  canvas.width = background.width;
  canvas.height = background.height;
  const ctx = canvas.getContext("2d")!;
  root.appendChild(canvas);

  const status = document.createElement("div");
  status.className = "status";
  root.appendChild(status);

  const control = new WebSocket(client.controlUrl());
  const stream = new WebSocket(client.streamUrl());
  stream.binaryType = "arraybuffer";

  const ui = new PerformanceConsole({
    project,
    control: {
      send: (text) => control.send(text),
      get isOpen() {
        return control.readyState === WebSocket.OPEN;
      },
    },
    cache,
    renderer,
    present: (pixels, column) => {
      ctx.putImageData(
        new ImageData(new Uint8ClampedArray(pixels), canvas.width, canvas.height),
        0,
        0,
      );
      status.textContent = `column ${column}`;
    },
  });

  control.addEventListener("open", () => ui.handleOpen());
  control.addEventListener("close", () => ui.handleClose());
  control.addEventListener("message", (ev) =>
    ui.handleControlMessage(ev.data as string),
  );
  stream.addEventListener("message", (ev) =>
    ui.handleStreamMessage(ev.data as ArrayBuffer),
  );

  // trigger buttons per layer/action, sliders, recording toggle
  const panel = document.createElement("div");
  panel.className = "panel";
  for (const layer of project.layers) {
    const row = document.createElement("div");
    const pick = document.createElement("button");
    pick.textContent = layer.id;
    pick.onclick = () => ui.selectLayer(layer.id);
    row.appendChild(pick);
    for (const action of layer.actions) {
      const btn = document.createElement("button");
      btn.textContent = action.key ? `${action.id} [${action.key}]` : action.id;
      btn.onclick = () => ui.trigger(layer.id, action.id);
      row.appendChild(btn);
    }
    panel.appendChild(row);
  }
  for (const [name, min, max, step] of [
    ["synth_alpha", 0, 1, 0.05],
    ["beta", 0, 1, 0.05],
    ["compression", 1, 16, 1],
  ] as const) {
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = String(min);
    slider.max = String(max);
    slider.step = String(step);
    slider.title = name;
    slider.onchange = () => ui.setParam(name, Number(slider.value));
    panel.appendChild(slider);
  }
  const rec = document.createElement("button");
  rec.textContent = "record";
  rec.onclick = () => {
    ui.setRecording(!ui.recording);
    rec.classList.toggle("active", ui.recording);
  };
  panel.appendChild(rec);
  root.appendChild(panel);

  document.addEventListener("keydown", (ev) => {
    if (ui.pressKey(ev.key)) ev.preventDefault();
  });

  await ui.prefetch();
  return ui;
}
