// Display-side decoding of the radio frames carried inside FrameAccepted
// events, per the framing tables in docs/wire-format.md. Values only; every
// rule verdict still comes from the server.

export interface EnvFrame {
  kind: "environment";
  stationId: number;
  seq: number;
  timestamp: number;
  temperature: number;
  humidity: number;
  audioDb: number;
}

export interface RfidFrame {
  kind: "rfid";
  stationId: number;
  seq: number;
  timestamp: number;
  rfidTag: number;
  activityCode: number;
}

export interface UplinkFrame {
  kind: "uplink";
  nodeId: number;
  seq: number;
  timestamp: number;
  latitude: number | null;
  longitude: number | null;
  altitude: number | null;
  bpm: number | null;
  lowBattery: boolean;
}

export type DecodedFrame = EnvFrame | RfidFrame | UplinkFrame;

export const ACTIVITY_NAMES: Record<number, string> = {
  1: "MILKING",
  2: "FEEDING",
  3: "WATERING",
  4: "RESTING",
};

function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0 || /[^0-9a-fA-F]/.test(hex)) {
    throw new Error(`not a hex string: ${hex}`);
  }
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function decodeFrameHex(hex: string): DecodedFrame | null {
  const bytes = hexToBytes(hex);
  const view = new DataView(bytes.buffer);
  const version = bytes[0] >> 4;
  const type = bytes[0] & 0x0f;
  if (version !== 1) return null;
  if (bytes.length === 22 && type === 0x1) {
    const flags = bytes[19];
    const gpsValid = (flags & 0x01) !== 0;
    const bpm = bytes[18];
    return {
      kind: "uplink",
      nodeId: view.getUint16(1),
      seq: bytes[3],
      timestamp: view.getUint32(4),
      latitude: gpsValid ? view.getInt32(8) / 1e7 : null,
      longitude: gpsValid ? view.getInt32(12) / 1e7 : null,
      altitude: gpsValid ? view.getInt16(16) / 10 : null,
      bpm: bpm > 0 ? bpm : null,
      lowBattery: (flags & 0x02) !== 0,
    };
  }
  if (bytes.length === 15 && type === 0x2) {
    return {
      kind: "environment",
      stationId: view.getUint16(1),
      seq: bytes[3],
      timestamp: view.getUint32(4),
      temperature: view.getInt16(8) / 10,
      humidity: bytes[10],
      audioDb: view.getInt16(11) / 10,
    };
  }
  if (bytes.length === 15 && type === 0x3) {
    return {
      kind: "rfid",
      stationId: view.getUint16(1),
      seq: bytes[3],
      timestamp: view.getUint32(4),
      rfidTag: view.getUint32(8),
      activityCode: bytes[12],
    };
  }
  return null;
}
