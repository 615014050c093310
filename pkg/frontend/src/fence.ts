// Geofence editing on a schematic lat/lon canvas: vertex list management and
// the same client-side validity checks the server applies, so obviously bad
// polygons never leave the browser. The server stays the authority; its
// diagnostic is displayed verbatim when it rejects.

import { LatLon } from "./types.js";

export interface FenceCheck {
  ok: boolean;
  reason?: string;
}

function orient(a: LatLon, b: LatLon, c: LatLon): number {
  const v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
  return v === 0 ? 0 : Math.sign(v);
}

function onSegment(a: LatLon, b: LatLon, c: LatLon): boolean {
  return (
    Math.min(a[0], b[0]) <= c[0] &&
    c[0] <= Math.max(a[0], b[0]) &&
    Math.min(a[1], b[1]) <= c[1] &&
    c[1] <= Math.max(a[1], b[1])
  );
}

export function segmentsCross(p1: LatLon, p2: LatLon, p3: LatLon, p4: LatLon): boolean {
  const d1 = orient(p3, p4, p1);
  const d2 = orient(p3, p4, p2);
  const d3 = orient(p1, p2, p3);
  const d4 = orient(p1, p2, p4);
  if (d1 !== d2 && d3 !== d4) return true;
  if (d1 === 0 && onSegment(p3, p4, p1)) return true;
  if (d2 === 0 && onSegment(p3, p4, p2)) return true;
  if (d3 === 0 && onSegment(p1, p2, p3)) return true;
  if (d4 === 0 && onSegment(p1, p2, p4)) return true;
  return false;
}

export function validateFence(vertices: LatLon[]): FenceCheck {
  if (vertices.length < 3) {
    return { ok: false, reason: `need at least 3 vertices, have ${vertices.length}` };
  }
  const closed = [...vertices, vertices[0]];
  for (let i = 0; i < vertices.length; i++) {
    const [lat, lon] = vertices[i];
    if (lat < -90 || lat > 90 || lon < -180 || lon > 180) {
      return { ok: false, reason: `vertex ${i + 1} outside geodetic range` };
    }
    if (closed[i][0] === closed[i + 1][0] && closed[i][1] === closed[i + 1][1]) {
      return { ok: false, reason: `vertices ${i + 1} and ${i + 2} are duplicates` };
    }
  }
  const n = vertices.length;
  for (let i = 0; i < n; i++) {
    const a: [LatLon, LatLon] = [vertices[i], vertices[(i + 1) % n]];
    for (let j = i + 2; j < n; j++) {
      if (i === 0 && j === n - 1) continue; // closing edge is adjacent
      const b: [LatLon, LatLon] = [vertices[j], vertices[(j + 1) % n]];
      if (segmentsCross(a[0], a[1], b[0], b[1])) {
        return { ok: false, reason: "polygon is self-intersecting" };
      }
    }
  }
  return { ok: true };
}

/** Maps between canvas pixels and lat/lon for the schematic editor. */
export class FenceEditor {
  vertices: LatLon[] = [];

  constructor(
    public latMin: number,
    public latMax: number,
    public lonMin: number,
    public lonMax: number,
    public width: number,
    public height: number,
  ) {}

  static aroundFence(vertices: LatLon[], width: number, height: number): FenceEditor {
    const lats = vertices.map((v) => v[0]);
    const lons = vertices.map((v) => v[1]);
    const latPad = Math.max((Math.max(...lats) - Math.min(...lats)) * 0.3, 1e-3);
    const lonPad = Math.max((Math.max(...lons) - Math.min(...lons)) * 0.3, 1e-3);
    return new FenceEditor(
      Math.min(...lats) - latPad,
      Math.max(...lats) + latPad,
      Math.min(...lons) - lonPad,
      Math.max(...lons) + lonPad,
      width,
      height,
    );
  }

  toPixel([lat, lon]: LatLon): [number, number] {
    const x = ((lon - this.lonMin) / (this.lonMax - this.lonMin)) * this.width;
    const y = this.height - ((lat - this.latMin) / (this.latMax - this.latMin)) * this.height;
    return [x, y];
  }

  toLatLon(x: number, y: number): LatLon {
    const lon = this.lonMin + (x / this.width) * (this.lonMax - this.lonMin);
    const lat = this.latMin + ((this.height - y) / this.height) * (this.latMax - this.latMin);
    return [Number(lat.toFixed(6)), Number(lon.toFixed(6))];
  }

  add(x: number, y: number): void {
    this.vertices.push(this.toLatLon(x, y));
  }

  undo(): void {
    this.vertices.pop();
  }

  clear(): void {
    this.vertices = [];
  }

  check(): FenceCheck {
    return validateFence(this.vertices);
  }
}
