// Audio-level time series on a canvas, with the recommended band shaded.
// The axis auto-scales to the data but always keeps the band in view.

import { EnvSamplePayload } from "./types.js";

export function drawAudioChart(
  canvas: HTMLCanvasElement,
  ring: EnvSamplePayload[],
  band: [number, number] | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);

  const values = ring.map((s) => s.audio_level);
  const lo = Math.min(band ? band[0] - 5 : 30, ...(values.length ? values : [30]));
  const hi = Math.max(band ? band[1] + 5 : 50, ...(values.length ? values : [50]));
  const y = (v: number) => height - ((v - lo) / (hi - lo)) * (height - 20) - 10;

  if (band) {
    ctx.fillStyle = "rgba(80, 160, 90, 0.18)";
    ctx.fillRect(0, y(band[1]), width, y(band[0]) - y(band[1]));
    ctx.strokeStyle = "rgba(80, 160, 90, 0.5)";
    ctx.setLineDash([4, 4]);
    for (const edge of band) {
      ctx.beginPath();
      ctx.moveTo(0, y(edge));
      ctx.lineTo(width, y(edge));
      ctx.stroke();
    }
    ctx.setLineDash([]);
  }

  if (values.length > 1) {
    ctx.strokeStyle = "#56b6ff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    values.forEach((v, i) => {
      const x = (i / (values.length - 1)) * (width - 10) + 5;
      if (i === 0) ctx.moveTo(x, y(v));
      else ctx.lineTo(x, y(v));
    });
    ctx.stroke();
  }

  ctx.fillStyle = "#8a939e";
  ctx.font = "10px system-ui";
  ctx.fillText(`${hi.toFixed(0)} dB`, 4, 12);
  ctx.fillText(`${lo.toFixed(0)} dB`, 4, height - 4);
  if (values.length > 0) {
    ctx.fillStyle = "#d6dde4";
    ctx.fillText(`${values[values.length - 1].toFixed(1)} dB`, width - 52, 12);
  }
}
