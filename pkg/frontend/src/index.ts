export * from "./protocol.js";
export * from "./sprites.js";
export * from "./renderer.js";
export * from "./keys.js";
export * from "./console.js";
export * from "./client.js";
