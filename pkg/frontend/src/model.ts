// The dashboard view model. It renders what the API said, never deriving a
// rule verdict of its own: alert lifecycle arrives via Alert* events,
// environment values are decoded (not judged) from accepted frames, and the
// herd table is re-fetched from the registry endpoint when cattle-affecting
// events arrive. Out-of-band styling of tiles uses the server-exposed rule
// bands, so thresholds are configuration, not client code.

import { ApiClient } from "./api.js";
import { ACTIVITY_NAMES, decodeFrameHex } from "./codec.js";
import {
  AlertPayload,
  CowRow,
  EnvSamplePayload,
  EventRecord,
  RuleConfig,
  Snapshot,
  StationView,
  Stats,
} from "./types.js";

export type ConnectionState = "connecting" | "live" | "degraded";

export interface DashboardState {
  connection: ConnectionState;
  lastGap: { from: number; to: number } | null;
  rules: RuleConfig | null;
  stations: Record<string, StationView>;
  cattle: CowRow[];
  alerts: Record<number, AlertPayload>;
  stats: Stats | null;
  fenceVersion: number;
  /** session activity counters shown in the lower-middle panel */
  counters: Record<string, { activity: string; count: number }>;
}

export function emptyState(): DashboardState {
  return {
    connection: "connecting",
    lastGap: null,
    rules: null,
    stations: {},
    cattle: [],
    alerts: {},
    stats: null,
    fenceVersion: 0,
    counters: {},
  };
}

export interface PendingAction {
  kind: "ack";
  alertId: number;
  actor: string;
}

const RING_KEEP_S = 24 * 3600;

export class DashboardModel {
  state: DashboardState = emptyState();
  onChange: () => void = () => {};
  /** actions deferred while the stream is down; flushed on reconnect */
  pending: PendingAction[] = [];
  private cattleRefetch: ReturnType<typeof setTimeout> | null = null;

  constructor(private api: ApiClient) {}

  private changed(): void {
    this.onChange();
  }

  /** Full resynchronization from the snapshot endpoints. */
  async resync(): Promise<void> {
    const snap: Snapshot = await this.api.snapshot();
    this.state.rules = snap.rules;
    this.state.stations = snap.stations;
    this.state.cattle = snap.cattle;
    this.state.fenceVersion = snap.fence_version;
    this.state.alerts = {};
    for (const alert of snap.alerts) {
      this.state.alerts[alert.alert_id] = alert;
    }
    this.state.stats = snap.stats;
    this.state.counters = {};
    for (const cow of snap.cattle) {
      if (cow.counter) {
        this.state.counters[cow.cattle_id] = {
          activity: cow.counter.activity,
          count: cow.counter.count,
        };
      }
    }
    this.changed();
  }

  setConnection(connection: ConnectionState, gap?: { from: number; to: number }): void {
    this.state.connection = connection;
    if (gap) {
      this.state.lastGap = gap;
    }
    this.changed();
  }

  async flushPending(): Promise<void> {
    const queued = this.pending.splice(0);
    for (const action of queued) {
      try {
        await this.api.acknowledgeAlert(action.alertId, action.actor);
      } catch {
        // NotOpen races and the like resolve via the refreshed alert list
      }
    }
    if (queued.length > 0) {
      const alerts = await this.api.getAlerts("all");
      this.state.alerts = {};
      for (const alert of alerts.alerts) {
        this.state.alerts[alert.alert_id] = alert;
      }
      this.changed();
    }
  }

  /** Acknowledge from the UI. While degraded the action is queued, with no
   * optimistic state change, and a warning surfaces to the operator. */
  async acknowledge(alertId: number, actor: string): Promise<"done" | "queued" | "refreshed"> {
    if (this.state.connection !== "live") {
      this.pending.push({ kind: "ack", alertId, actor });
      this.changed();
      return "queued";
    }
    try {
      const alert = await this.api.acknowledgeAlert(alertId, actor);
      this.state.alerts[alert.alert_id] = alert;
      this.changed();
      return "done";
    } catch {
      // lost the race (already acked/resolved elsewhere): refresh, no dialog
      const alerts = await this.api.getAlerts("all");
      this.state.alerts = {};
      for (const alert of alerts.alerts) {
        this.state.alerts[alert.alert_id] = alert;
      }
      this.changed();
      return "refreshed";
    }
  }

  applyEvent(record: EventRecord): void {
    switch (record.kind) {
      case "FrameAccepted":
        this.applyFrame(record);
        break;
      case "AlertOpened": {
        const p = record.payload as unknown as {
          alert_id: number;
          rule: string;
          subject: string;
          severity: "Warning" | "Critical";
          detail: string;
        };
        this.state.alerts[p.alert_id] = {
          alert_id: p.alert_id,
          rule: p.rule,
          subject: p.subject,
          severity: p.severity,
          detail: p.detail,
          opened_at: record.ts_iso ?? null,
          acknowledged_at: null,
          resolved_at: null,
          state: "Open",
        };
        this.changed();
        break;
      }
      case "AlertAcknowledged": {
        const p = record.payload as { alert_id?: number };
        const alert = p.alert_id !== undefined ? this.state.alerts[p.alert_id] : undefined;
        if (alert && alert.state === "Open") {
          alert.state = "Acknowledged";
          alert.acknowledged_at = record.ts_iso ?? null;
          this.changed();
        }
        break;
      }
      case "AlertResolved": {
        const p = record.payload as { alert_id?: number };
        const alert = p.alert_id !== undefined ? this.state.alerts[p.alert_id] : undefined;
        if (alert) {
          alert.state = "Resolved";
          alert.resolved_at = record.ts_iso ?? null;
          this.changed();
        }
        break;
      }
      case "FenceUpdated": {
        const p = record.payload as { version?: number };
        if (typeof p.version === "number") {
          this.state.fenceVersion = p.version;
        }
        this.changed();
        break;
      }
      case "ProfileRegistered":
      case "CounterReset":
      case "DayRollup":
        this.scheduleCattleRefetch();
        break;
      default:
        break;
    }
  }

  private applyFrame(record: EventRecord): void {
    const payload = record.payload as { hex?: string; src?: string };
    if (!payload.hex) return;
    let frame;
    try {
      frame = decodeFrameHex(payload.hex);
    } catch {
      return;
    }
    if (!frame) return;
    if (frame.kind === "environment") {
      const key = String(frame.stationId);
      const station: StationView = this.state.stations[key] ?? { latest: null, ring: [] };
      const sample: EnvSamplePayload = {
        timestamp: record.ts_iso ?? null,
        temperature: frame.temperature,
        humidity: frame.humidity,
        audio_level: frame.audioDb,
      };
      station.latest = sample;
      station.ring.push(sample);
      const horizon = frame.timestamp - RING_KEEP_S;
      while (station.ring.length > 0) {
        const first = station.ring[0];
        const ts = first.timestamp ? Date.parse(first.timestamp) / 1000 : null;
        if (ts !== null && ts <= horizon) {
          station.ring.shift();
        } else {
          break;
        }
      }
      this.state.stations[key] = station;
      this.changed();
    } else if (frame.kind === "rfid") {
      // session counters need registry context; let the server state win
      this.scheduleCattleRefetch();
    } else {
      this.scheduleCattleRefetch();
    }
  }

  private scheduleCattleRefetch(): void {
    if (this.cattleRefetch !== null) return;
    this.cattleRefetch = setTimeout(() => {
      this.cattleRefetch = null;
      this.api
        .getCattle()
        .then((body) => {
          this.state.cattle = body.cattle as CowRow[];
          this.state.fenceVersion = body.fence_version;
          this.state.counters = {};
          for (const cow of this.state.cattle) {
            if (cow.counter) {
              this.state.counters[cow.cattle_id] = {
                activity: cow.counter.activity,
                count: cow.counter.count,
              };
            }
          }
          this.changed();
        })
        .catch(() => {});
    }, 300);
  }

  /** Out-of-band check for tile styling; thresholds come from the server. */
  outOfBand(field: "humidity" | "temperature" | "audio", value: number): boolean {
    if (!this.state.rules) return false;
    const band =
      field === "humidity"
        ? this.state.rules.humidity_band
        : field === "temperature"
          ? this.state.rules.temperature_band
          : this.state.rules.audio_band;
    return value < band[0] || value > band[1];
  }

  alertsByState(): { open: AlertPayload[]; acked: AlertPayload[]; resolved: AlertPayload[] } {
    const open: AlertPayload[] = [];
    const acked: AlertPayload[] = [];
    const resolved: AlertPayload[] = [];
    for (const alert of Object.values(this.state.alerts).sort((a, b) => b.alert_id - a.alert_id)) {
      if (alert.state === "Open") open.push(alert);
      else if (alert.state === "Acknowledged") acked.push(alert);
      else resolved.push(alert);
    }
    return { open, acked, resolved };
  }

  activityName(code: number): string {
    return ACTIVITY_NAMES[code] ?? `activity-${code}`;
  }
}
