/** Thin HTTP client over the performance service's REST endpoints. */

import type { ProjectDescriptor } from "./protocol.js";

export type FetchLike = (url: string) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  arrayBuffer(): Promise<ArrayBuffer>;
}>;

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private async get(path: string) {
    const res = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!res.ok) throw new Error(`GET ${path} -> ${res.status}`);
    return res;
  }

  async project(): Promise<ProjectDescriptor> {
    const res = await this.get("/project");
    return (await res.json()) as ProjectDescriptor;
  }

  async backgroundPng(): Promise<ArrayBuffer> {
    return (await this.get("/background.png")).arrayBuffer();
  }

  async spritePng(actor: string, frame: number): Promise<ArrayBuffer> {
    return (await this.get(`/sprites/${actor}/${frame}.png`)).arrayBuffer();
  }

  async recording(id: string): Promise<unknown> {
    return (await this.get(`/recordings/${id}`)).json();
  }

  controlUrl(): string {
    return `${this.baseUrl.replace(/^http/, "ws")}/control`;
  }

  streamUrl(): string {
    return `${this.baseUrl.replace(/^http/, "ws")}/stream`;
  }
}
