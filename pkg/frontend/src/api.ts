// HTTP client plus the live event stream with reconnect-and-resync.

import { AlertPayload, CowProfile, EventRecord, RuleConfig, Snapshot, StationView, Stats, LatLon } from "./types.js";

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const data = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, (data && data.detail) ?? text);
    }
    return data as T;
  }

  getRules(): Promise<RuleConfig> {
    return this.request("GET", "/api/v1/rules");
  }

  getEnvironment(): Promise<{ stations: Record<string, StationView> }> {
    return this.request("GET", "/api/v1/environment/latest");
  }

  getCattle(): Promise<{ cattle: unknown[]; fence_version: number }> {
    return this.request("GET", "/api/v1/cattle");
  }

  getAlerts(state: "open" | "acked" | "all" = "all"): Promise<{ alerts: AlertPayload[] }> {
    return this.request("GET", `/api/v1/alerts?state=${state}`);
  }

  getStats(): Promise<Stats> {
    return this.request("GET", "/api/v1/stats");
  }

  registerCattle(profile: Omit<CowProfile, "heartbeat_band"> & { heartbeat_band?: [number, number] }) {
    return this.request<{ accepted: boolean; warnings: string[] }>("POST", "/api/v1/cattle", profile);
  }

  acknowledgeAlert(alertId: number, actor: string) {
    return this.request<AlertPayload>("POST", `/api/v1/alerts/${alertId}/ack`, { actor });
  }

  putGeofence(vertices: LatLon[]) {
    return this.request<{ accepted: boolean; version: number }>("PUT", "/api/v1/geofence", {
      vertices,
    });
  }

  async snapshot(): Promise<Snapshot> {
    const [rules, environment, cattle, alerts, stats] = await Promise.all([
      this.getRules(),
      this.getEnvironment(),
      this.getCattle(),
      this.getAlerts("all"),
      this.getStats(),
    ]);
    return {
      rules,
      stations: environment.stations,
      cattle: cattle.cattle as Snapshot["cattle"],
      fence_version: cattle.fence_version,
      alerts: alerts.alerts,
      stats,
    };
  }
}

export type StreamStatus = "connecting" | "live" | "degraded";

interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  close(): void;
}

type EventSourceFactory = (url: string) => EventSourceLike;

/** One consumer of /api/v1/stream. The browser EventSource reconnects by
 * itself; what this adds is status reporting (no silent staleness) and a
 * resynchronization hook invoked on every (re)connect, plus gap detection
 * from the record sequence numbers. */
export class LiveStream {
  status: StreamStatus = "connecting";
  lastSeq: number | null = null;
  onEvent: (record: EventRecord) => void = () => {};
  onStatus: (status: StreamStatus, gap?: { from: number; to: number }) => void = () => {};
  private source: EventSourceLike | null = null;

  constructor(
    private url: string,
    private factory: EventSourceFactory = (u) => new EventSource(u) as unknown as EventSourceLike,
  ) {}

  start(): void {
    this.source = this.factory(this.url);
    this.source.onopen = () => {
      this.status = "live";
      this.onStatus("live");
    };
    this.source.onerror = () => {
      if (this.status !== "degraded") {
        this.status = "degraded";
        this.onStatus("degraded");
      }
    };
    this.source.onmessage = (ev) => {
      if (this.status !== "live") {
        // data flowing again counts as connected even without an open event
        this.status = "live";
        this.onStatus("live");
      }
      const record = JSON.parse(ev.data) as EventRecord;
      if (this.lastSeq !== null && record.seq > this.lastSeq + 1) {
        this.onStatus("live", { from: this.lastSeq + 1, to: record.seq - 1 });
      }
      this.lastSeq = record.seq;
      this.onEvent(record);
    };
  }

  stop(): void {
    this.source?.close();
    this.source = null;
  }
}
