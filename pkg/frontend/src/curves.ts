// Threshold explorer: renders service-computed curve points as SVG polylines
// and lets a policy pick the highlighted threshold. Every plotted number
// comes straight from /api/curves or /api/threshold.

import { CurvePoint } from "./api";

export interface ExplorerState {
  points: CurvePoint[];
  markerIndex: number; // draggable marker position (index into points)
  selectedThreshold: number | null; // set by apply-policy responses
}

export function nearestIndex(points: CurvePoint[], threshold: number): number {
  let best = 0;
  let dist = Infinity;
  points.forEach((p, i) => {
    const d = Math.abs(p.threshold - threshold);
    if (d < dist) {
      dist = d;
      best = i;
    }
  });
  return best;
}

export function markerReadout(state: ExplorerState): CurvePoint | null {
  if (!state.points.length) return null;
  return state.points[Math.max(0, Math.min(state.markerIndex, state.points.length - 1))];
}

const SERIES: { key: keyof CurvePoint; label: string; color: string }[] = [
  { key: "precision", label: "precision", color: "#2563eb" },
  { key: "recall", label: "recall", color: "#dc2626" },
  { key: "f1", label: "f1", color: "#16a34a" },
  { key: "coverage", label: "coverage", color: "#9333ea" },
];

export function renderCurveSvg(state: ExplorerState, width = 560, height = 320): string {
  const pts = state.points;
  if (!pts.length) {
    return `<svg width="${width}" height="${height}"><text x="20" y="40" class="empty">` +
      `No resolved labels yet: annotate some pairs to see the curves.</text></svg>`;
  }
  const pad = 42;
  const tMin = pts[0].threshold;
  const tMax = pts[pts.length - 1].threshold;
  const x = (t: number) =>
    pad + ((t - tMin) / Math.max(1e-12, tMax - tMin)) * (width - 2 * pad);
  const y = (v: number) => height - pad - v * (height - 2 * pad);

  const lines = SERIES.map(({ key, label, color }) => {
    const path = pts.map((p) => `${x(p.threshold).toFixed(1)},${y(p[key] as number).toFixed(1)}`).join(" ");
    return `<polyline fill="none" stroke="${color}" stroke-width="2" points="${path}"/>` +
      `<text x="${width - pad + 4}" y="${y(pts[pts.length - 1][key] as number).toFixed(1)}" fill="${color}" font-size="10">${label}</text>`;
  }).join("");

  const marker = markerReadout(state);
  const markerLine = marker
    ? `<line class="marker" x1="${x(marker.threshold)}" y1="${pad}" x2="${x(marker.threshold)}" y2="${height - pad}" stroke="#111" stroke-dasharray="4 3"/>`
    : "";
  const selected =
    state.selectedThreshold !== null
      ? `<line class="selected" x1="${x(state.selectedThreshold)}" y1="${pad}" x2="${x(state.selectedThreshold)}" y2="${height - pad}" stroke="#f59e0b" stroke-width="3"/>` +
        `<text x="${x(state.selectedThreshold) + 4}" y="${pad + 12}" fill="#b45309" font-size="11">t=${state.selectedThreshold}</text>`
      : "";

  const axis =
    `<line x1="${pad}" y1="${height - pad}" x2="${width - pad}" y2="${height - pad}" stroke="#888"/>` +
    `<line x1="${pad}" y1="${pad}" x2="${pad}" y2="${height - pad}" stroke="#888"/>` +
    `<text x="${pad}" y="${height - pad + 16}" font-size="10">${tMin}</text>` +
    `<text x="${width - pad - 10}" y="${height - pad + 16}" font-size="10">${tMax}</text>`;

  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">${axis}${lines}${markerLine}${selected}</svg>`;
}
