// Shapes of the aggregator API payloads the console consumes.

export interface RuleConfig {
  humidity_band: [number, number];
  temperature_band: [number, number];
  audio_band: [number, number];
  persistence_count: number;
  node_silence_timeout_s: number;
  day_rollover_offset_s: number;
  default_heartbeat_band: [number, number];
}

export interface EventRecord {
  seq: number;
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
  ts_iso?: string;
}

export interface EnvSamplePayload {
  timestamp: string | null;
  temperature: number;
  humidity: number;
  audio_level: number;
}

export interface StationView {
  latest: EnvSamplePayload | null;
  ring: EnvSamplePayload[];
}

export interface AlertPayload {
  alert_id: number;
  rule: string;
  subject: string;
  severity: "Warning" | "Critical";
  opened_at: string | null;
  acknowledged_at: string | null;
  resolved_at: string | null;
  detail: string;
  state: "Open" | "Acknowledged" | "Resolved";
}

export interface CowProfile {
  cattle_id: string;
  rfid_tag: number;
  node_id: number;
  expected_activity: Record<string, number>;
  heartbeat_band: [number, number];
}

export interface CowRow {
  cattle_id: string;
  profile: CowProfile;
  latest_fix: {
    latitude: number;
    longitude: number;
    altitude: number | null;
    quality: string;
    timestamp: string;
  } | null;
  in_fence: boolean | null;
  latest_bpm: number | null;
  bpm_confidence: number | null;
  counter: { activity: string; count: number; started_at: string } | null;
  daily: Record<string, Record<string, number>>;
  last_uplink_at: string | null;
}

export interface Stats {
  accepted: Record<string, number>;
  rejected: Record<string, number>;
  events: number;
  alerts_total: number;
  alerts_open: number;
}

export type LatLon = [number, number];

export interface Snapshot {
  rules: RuleConfig;
  stations: Record<string, StationView>;
  cattle: CowRow[];
  fence_version: number;
  alerts: AlertPayload[];
  stats: Stats;
}
