// Canned-response fetch plus a scriptable EventSource for node-side tests.

import { ApiClient } from "../src/api.js";
import { RuleConfig } from "../src/types.js";

export const RULES: RuleConfig = {
  humidity_band: [30, 80],
  temperature_band: [10, 30],
  audio_band: [35, 45],
  persistence_count: 3,
  node_silence_timeout_s: 300,
  day_rollover_offset_s: 0,
  default_heartbeat_band: [48, 84],
};

export interface FakeServer {
  api: ApiClient;
  routes: Map<string, (init?: RequestInit) => { status?: number; body: unknown }>;
  calls: string[];
}

export function fakeServer(): FakeServer {
  const routes = new Map<string, (init?: RequestInit) => { status?: number; body: unknown }>();
  const calls: string[] = [];
  routes.set("GET /api/v1/rules", () => ({ body: RULES }));
  routes.set("GET /api/v1/environment/latest", () => ({ body: { stations: {} } }));
  routes.set("GET /api/v1/cattle", () => ({ body: { cattle: [], fence_version: 1 } }));
  routes.set("GET /api/v1/alerts?state=all", () => ({ body: { alerts: [] } }));
  routes.set("GET /api/v1/stats", () => ({
    body: { accepted: {}, rejected: {}, events: 0, alerts_total: 0, alerts_open: 0 },
  }));
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    const key = `${init?.method ?? "GET"} ${url}`;
    calls.push(key);
    const route = routes.get(key);
    if (!route) {
      return new Response(JSON.stringify({ detail: `no route ${key}` }), { status: 404 });
    }
    const result = route(init);
    return new Response(JSON.stringify(result.body), { status: result.status ?? 200 });
  };
  return { api: new ApiClient("", fetchImpl), routes, calls };
}

export class FakeEventSource {
  static instances: FakeEventSource[] = [];
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  onopen: ((ev: unknown) => void) | null = null;
  closed = false;

  constructor(public url: string) {
    FakeEventSource.instances.push(this);
  }

  open(): void {
    this.onopen?.({});
  }

  fail(): void {
    this.onerror?.({});
  }

  emit(record: unknown): void {
    this.onmessage?.({ data: JSON.stringify(record) });
  }

  close(): void {
    this.closed = true;
  }
}

export function envFrameEvent(
  seq: number,
  opts: { stationId?: number; humidity?: number; temperature?: number; audio?: number; ts?: number },
) {
  const stationId = opts.stationId ?? 1;
  const humidity = opts.humidity ?? 55;
  const temperature = Math.round((opts.temperature ?? 22.0) * 10);
  const audio = Math.round((opts.audio ?? 40.0) * 10);
  const ts = opts.ts ?? 1_704_067_230;
  const bytes = new Uint8Array(15);
  const view = new DataView(bytes.buffer);
  bytes[0] = 0x12;
  view.setUint16(1, stationId);
  bytes[3] = seq & 0xff;
  view.setUint32(4, ts);
  view.setInt16(8, temperature);
  bytes[10] = humidity;
  view.setInt16(11, audio);
  // crc bytes stay zero: the display decoder trusts server-validated frames
  const hex = Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
  return {
    seq,
    ts,
    kind: "FrameAccepted",
    payload: { hex, src: "station" },
    ts_iso: new Date(ts * 1000).toISOString(),
  };
}
