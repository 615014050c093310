// DOM rendering and admin interactions. Layout mirrors the operator
// console: humidity tile top-left, temperature top-right, the audio chart
// across the middle, RFID activity counters below it, then the herd table,
// alert queue and admin panels.

import { ApiClient, ApiError } from "./api.js";
import { drawAudioChart } from "./chart.js";
import { FenceEditor, validateFence } from "./fence.js";
import { DashboardModel } from "./model.js";
import { AlertPayload } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fmtTime(iso: string | null): string {
  if (!iso) return "–";
  return iso.replace("T", " ").replace(/\.\d+Z$/, "Z");
}

export class Ui {
  private editor: FenceEditor | null = null;
  private toastTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private model: DashboardModel,
    private api: ApiClient,
  ) {}

  bind(): void {
    this.model.onChange = () => this.render();
    el<HTMLFormElement>("register-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitRegistration();
    });
    const canvas = el<HTMLCanvasElement>("fence-canvas");
    canvas.addEventListener("click", (ev) => {
      const rect = canvas.getBoundingClientRect();
      this.fenceEditor().add(ev.clientX - rect.left, ev.clientY - rect.top);
      this.renderFence();
    });
    el<HTMLButtonElement>("fence-undo").addEventListener("click", () => {
      this.fenceEditor().undo();
      this.renderFence();
    });
    el<HTMLButtonElement>("fence-clear").addEventListener("click", () => {
      this.fenceEditor().clear();
      this.renderFence();
    });
    el<HTMLButtonElement>("fence-submit").addEventListener("click", () => {
      void this.submitFence();
    });
  }

  private fenceEditor(): FenceEditor {
    if (!this.editor) {
      const canvas = el<HTMLCanvasElement>("fence-canvas");
      this.editor = new FenceEditor(46.99, 47.02, 7.99, 8.03, canvas.width, canvas.height);
    }
    return this.editor;
  }

  toast(text: string, kind: "info" | "warn" = "info"): void {
    const node = el<HTMLDivElement>("toast");
    node.textContent = text;
    node.className = `toast show ${kind}`;
    if (this.toastTimer) clearTimeout(this.toastTimer);
    this.toastTimer = setTimeout(() => {
      node.className = "toast";
    }, 4000);
  }

  render(): void {
    this.renderBanner();
    this.renderTiles();
    this.renderChart();
    this.renderCounters();
    this.renderHerd();
    this.renderAlerts();
    this.renderStats();
    this.renderFence();
  }

  private renderBanner(): void {
    const banner = el<HTMLDivElement>("banner");
    const state = this.model.state.connection;
    if (state === "live") {
      banner.className = "banner live";
      banner.textContent = this.model.state.lastGap
        ? `live — resynchronized after missing events ${this.model.state.lastGap.from}–${this.model.state.lastGap.to}`
        : "live";
    } else if (state === "degraded") {
      banner.className = "banner degraded";
      banner.textContent =
        "stream down — data may be stale; actions are queued until reconnect";
    } else {
      banner.className = "banner connecting";
      banner.textContent = "connecting…";
    }
  }

  private firstEnvStation() {
    const ids = Object.keys(this.model.state.stations).sort();
    for (const id of ids) {
      const st = this.model.state.stations[id];
      if (st.latest || st.ring.length > 0) return st;
    }
    return ids.length ? this.model.state.stations[ids[0]] : null;
  }

  private renderTiles(): void {
    const station = this.firstEnvStation();
    const latest = station?.latest ?? null;
    const humidity = el<HTMLDivElement>("tile-humidity");
    const temperature = el<HTMLDivElement>("tile-temperature");
    const hv = latest ? latest.humidity : null;
    const tv = latest ? latest.temperature : null;
    humidity.querySelector(".value")!.textContent = hv === null ? "–" : `${hv} %`;
    temperature.querySelector(".value")!.textContent = tv === null ? "–" : `${tv.toFixed(1)} °C`;
    humidity.classList.toggle("warning", hv !== null && this.model.outOfBand("humidity", hv));
    temperature.classList.toggle(
      "warning",
      tv !== null && this.model.outOfBand("temperature", tv),
    );
  }

  private renderChart(): void {
    const station = this.firstEnvStation();
    const canvas = el<HTMLCanvasElement>("audio-chart");
    drawAudioChart(canvas, station?.ring ?? [], this.model.state.rules?.audio_band ?? null);
  }

  private renderCounters(): void {
    const host = el<HTMLDivElement>("counters");
    const entries = Object.entries(this.model.state.counters);
    host.innerHTML = entries.length
      ? entries
          .map(
            ([cow, c]) =>
              `<div class="counter"><span class="cow">${cow}</span>` +
              `<span class="activity">${c.activity}</span>` +
              `<span class="count">${c.count}</span></div>`,
          )
          .join("")
      : '<div class="muted">no activity sessions yet</div>';
  }

  private renderHerd(): void {
    const body = el<HTMLTableSectionElement>("herd-body");
    body.innerHTML = this.model.state.cattle
      .map((cow) => {
        const fix = cow.latest_fix;
        const badge =
          cow.in_fence === null
            ? '<span class="badge unknown">no fix</span>'
            : cow.in_fence
              ? '<span class="badge ok">in fence</span>'
              : '<span class="badge breach">OUTSIDE</span>';
        const confidence =
          cow.bpm_confidence === null ? "" : ` <small>(${cow.bpm_confidence.toFixed(2)})</small>`;
        const counter = cow.counter ? `${cow.counter.activity} ×${cow.counter.count}` : "–";
        return (
          `<tr><td>${cow.cattle_id}</td>` +
          `<td>${fix ? `${fix.latitude.toFixed(5)}, ${fix.longitude.toFixed(5)}` : "–"}</td>` +
          `<td>${badge}</td>` +
          `<td>${cow.latest_bpm ?? "–"}${confidence}</td>` +
          `<td>${counter}</td>` +
          `<td>${fmtTime(cow.last_uplink_at)}</td></tr>`
        );
      })
      .join("");
  }

  private alertRow(alert: AlertPayload, withAck: boolean): string {
    const ack = withAck
      ? `<button class="ack" data-alert="${alert.alert_id}">ack</button>`
      : "";
    const when =
      alert.state === "Resolved"
        ? `resolved ${fmtTime(alert.resolved_at)}`
        : alert.state === "Acknowledged"
          ? `acked ${fmtTime(alert.acknowledged_at)}`
          : `opened ${fmtTime(alert.opened_at)}`;
    return (
      `<div class="alert ${alert.severity.toLowerCase()} ${alert.state.toLowerCase()}">` +
      `<span class="rule">${alert.rule}</span>` +
      `<span class="subject">${alert.subject}</span>` +
      `<span class="detail">${alert.detail}</span>` +
      `<span class="when">${when}</span>${ack}</div>`
    );
  }

  private renderAlerts(): void {
    const groups = this.model.alertsByState();
    el<HTMLDivElement>("alerts-open").innerHTML =
      groups.open.map((a) => this.alertRow(a, true)).join("") ||
      '<div class="muted">none</div>';
    el<HTMLDivElement>("alerts-acked").innerHTML =
      groups.acked.map((a) => this.alertRow(a, false)).join("") ||
      '<div class="muted">none</div>';
    el<HTMLDivElement>("alerts-resolved").innerHTML =
      groups.resolved.slice(0, 12).map((a) => this.alertRow(a, false)).join("") ||
      '<div class="muted">none</div>';
    for (const button of document.querySelectorAll<HTMLButtonElement>("button.ack")) {
      button.onclick = () => void this.acknowledge(Number(button.dataset.alert));
    }
  }

  private async acknowledge(alertId: number): Promise<void> {
    const outcome = await this.model.acknowledge(alertId, "admin");
    if (outcome === "queued") {
      this.toast("stream disconnected — acknowledgement queued, not applied", "warn");
    } else if (outcome === "refreshed") {
      this.toast("alert had already changed state; list refreshed");
    }
  }

  private renderStats(): void {
    const stats = this.model.state.stats;
    el<HTMLDivElement>("stats").textContent = stats
      ? `events ${stats.events} · accepted ${Object.values(stats.accepted).reduce((a, b) => a + b, 0)}` +
        ` · rejected ${Object.values(stats.rejected).reduce((a, b) => a + b, 0)}` +
        ` · open alerts ${stats.alerts_open}`
      : "";
  }

  private async submitRegistration(): Promise<void> {
    const out = el<HTMLDivElement>("register-result");
    const form = el<HTMLFormElement>("register-form");
    const data = new FormData(form);
    const expected: Record<string, number> = {};
    const expectedRaw = String(data.get("expected") ?? "").trim();
    if (expectedRaw) {
      for (const part of expectedRaw.split(",")) {
        const [name, count] = part.split(":").map((s) => s.trim());
        expected[name.toUpperCase()] = Number(count);
      }
    }
    const bandLo = Number(data.get("band_lo"));
    const bandHi = Number(data.get("band_hi"));
    if (!(bandLo < bandHi)) {
      out.textContent = "heartbeat band must have min < max";
      out.className = "error";
      return;
    }
    const profile = {
      cattle_id: String(data.get("cattle_id")),
      rfid_tag: Number(data.get("rfid_tag")),
      node_id: Number(data.get("node_id")),
      expected_activity: expected,
      heartbeat_band: [bandLo, bandHi] as [number, number],
    };
    const locally = this.model.state.cattle.find(
      (c) =>
        c.profile.rfid_tag === profile.rfid_tag || c.profile.node_id === profile.node_id,
    );
    if (locally) {
      out.textContent = `collides with ${locally.cattle_id} (tag or node already in use)`;
      out.className = "error";
      return;
    }
    try {
      const result = await this.api.registerCattle(profile);
      out.textContent = result.warnings.length
        ? `registered with warnings: ${result.warnings.join(", ")}`
        : "registered";
      out.className = "ok";
      form.reset();
    } catch (e) {
      const detail = e instanceof ApiError ? e.message : String(e);
      out.textContent = `rejected: ${detail}`;
      out.className = "error";
    }
  }

  private renderFence(): void {
    const canvas = el<HTMLCanvasElement>("fence-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const editor = this.fenceEditor();
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#101418";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#2a3340";
    for (let i = 1; i < 6; i++) {
      ctx.beginPath();
      ctx.moveTo((canvas.width / 6) * i, 0);
      ctx.lineTo((canvas.width / 6) * i, canvas.height);
      ctx.moveTo(0, (canvas.height / 6) * i);
      ctx.lineTo(canvas.width, (canvas.height / 6) * i);
      ctx.stroke();
    }
    if (editor.vertices.length > 0) {
      ctx.strokeStyle = "#e0b64a";
      ctx.fillStyle = "#e0b64a";
      ctx.beginPath();
      editor.vertices.forEach((v, i) => {
        const [x, y] = editor.toPixel(v);
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
        ctx.fillRect(x - 2, y - 2, 4, 4);
      });
      if (editor.vertices.length > 2) ctx.closePath();
      ctx.stroke();
    }
    const verdict = editor.check();
    const status = el<HTMLDivElement>("fence-status");
    status.textContent =
      editor.vertices.length === 0
        ? `fence v${this.model.state.fenceVersion} active — click to draft a new one`
        : verdict.ok
          ? `${editor.vertices.length} vertices — looks valid`
          : verdict.reason ?? "invalid";
    el<HTMLButtonElement>("fence-submit").disabled = !verdict.ok;
  }

  private async submitFence(): Promise<void> {
    const editor = this.fenceEditor();
    const verdict = validateFence(editor.vertices);
    const status = el<HTMLDivElement>("fence-status");
    if (!verdict.ok) {
      status.textContent = `blocked: ${verdict.reason}`;
      return;
    }
    try {
      const result = await this.api.putGeofence(editor.vertices);
      status.textContent = `accepted — fence now v${result.version}`;
      this.model.state.fenceVersion = result.version;
      editor.clear();
      this.renderFence();
    } catch (e) {
      const detail = e instanceof ApiError ? e.message : String(e);
      status.textContent = `server rejected: ${detail}`;
    }
  }
}
