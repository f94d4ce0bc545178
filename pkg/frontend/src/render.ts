/** Pure HTML/SVG renderers. Every value displayed is a formatting of an API
 * payload field: badge colors come solely from the record's alert list, the
 * delta arrow solely from the server-computed flag. */

import {
  DISPOSITION_CLASSES,
  normalizeView,
  type PredictionRecord,
  type Task,
  type ViewConfig,
  type WaterfallPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Stable de-identified label for a patient id (demo config can reveal). */
export function displayId(patientId: string, revealIds: boolean): string {
  if (revealIds) return patientId;
  let h = 5381;
  for (let i = 0; i < patientId.length; i++) {
    h = ((h << 5) + h + patientId.charCodeAt(i)) >>> 0;
  }
  return `Patient ${String(h % 100000).padStart(5, "0")}`;
}

export function formatProb(p: number | null | undefined): string {
  if (p === null || p === undefined) return "–";
  return `${(p * 100).toFixed(2)}%`;
}

export function formatDelta(d: number | null | undefined): string {
  if (d === null || d === undefined) return "–";
  const sign = d > 0 ? "+" : "";
  return `${sign}${(d * 100).toFixed(2)}%`;
}

export function badgeHtml(alerts: ("green" | "red")[]): string {
  return alerts
    .map((color) => `<span class="badge badge-${color}">${color}</span>`)
    .join("");
}

/** Up/down glyph prefixed to the 48-hr column iff the server set the flag. */
export function arrowGlyph(deltaArrow: -1 | 0 | 1): string {
  if (deltaArrow === 1) return `<span class="arrow arrow-up" title="48-hr discharge probability rose by at least 0.1">↑</span>`;
  if (deltaArrow === -1) return `<span class="arrow arrow-down" title="48-hr discharge probability fell by at least 0.1">↓</span>`;
  return "";
}

function dispositionCell(probs: unknown): string {
  if (!Array.isArray(probs)) return "–";
  let best = 0;
  for (let i = 1; i < probs.length; i++) {
    if (probs[i] > probs[best]) best = i;
  }
  return `${escapeHtml(DISPOSITION_CLASSES[best] ?? String(best))} (${formatProb(probs[best])})`;
}

const TASK_LABELS: Record<Task, string> = {
  mortality: "Mortality",
  disposition: "Final destination",
  discharge_24: "Discharge 24h",
  discharge_48: "Discharge 48h",
  enter_icu_24: "Enter ICU 24h",
  enter_icu_48: "Enter ICU 48h",
  leave_icu_24: "Leave ICU 24h",
  leave_icu_48: "Leave ICU 48h",
};

const CATEGORY_2_TASKS: Task[] = [
  "mortality",
  "discharge_24",
  "discharge_48",
  "disposition",
  "enter_icu_24",
  "enter_icu_48",
  "leave_icu_24",
  "leave_icu_48",
];

export function tableHeaderHtml(view: ViewConfig): string {
  const cats = normalizeView(view).visibleCategories;
  const cells: string[] = [];
  cells.push("<th>Date</th><th>Patient</th><th>Department</th><th>Unit</th><th>Bed</th><th>Service</th><th>Level</th>");
  if (cats.includes(2)) {
    for (const task of CATEGORY_2_TASKS) cells.push(`<th>${TASK_LABELS[task]}</th>`);
  }
  if (cats.includes(3)) {
    cells.push("<th>Mortality Δ</th><th>Discharge 48h Δ</th>");
  }
  if (cats.includes(4)) cells.push("<th>Alerts</th>");
  if (cats.includes(5)) cells.push("<th>EDD</th>");
  cells.push("<th></th>"); // comment affordance
  return `<tr>${cells.join("")}</tr>`;
}

/** One table row; probability cells carry data attributes so a click can
 * open the matching waterfall. */
export function tableRowHtml(record: PredictionRecord, view: ViewConfig): string {
  const cats = normalizeView(view).visibleCategories;
  const cells: string[] = [];
  const pid = escapeHtml(record.patient_id);
  cells.push(`<td>${escapeHtml(record.record_date)}</td>`);
  cells.push(`<td class="patient-cell" data-patient="${pid}">${escapeHtml(displayId(record.patient_id, view.revealIds))}</td>`);
  cells.push(`<td>${escapeHtml(record.department)}</td>`);
  cells.push(`<td>${escapeHtml(record.unit)}</td>`);
  cells.push(`<td>${escapeHtml(record.bed)}</td>`);
  cells.push(`<td>${escapeHtml(record.service)}</td>`);
  cells.push(`<td>${escapeHtml(record.level_of_care)}</td>`);
  if (cats.includes(2)) {
    for (const task of CATEGORY_2_TASKS) {
      const p = record.probabilities[task];
      const clickable = p === null || p === undefined ? "" : ` class="prob-cell" data-patient="${pid}" data-date="${escapeHtml(record.record_date)}" data-task="${task}"`;
      if (task === "disposition") {
        cells.push(`<td${clickable}>${dispositionCell(p)}</td>`);
      } else {
        const arrow = task === "discharge_48" ? arrowGlyph(record.delta_arrow) : "";
        cells.push(`<td${clickable}>${arrow}${formatProb(p as number | null)}</td>`);
      }
    }
  }
  if (cats.includes(3)) {
    cells.push(`<td>${formatDelta(record.deltas?.["mortality"] as number | null)}</td>`);
    cells.push(`<td>${formatDelta(record.deltas?.["discharge_48"] as number | null)}</td>`);
  }
  if (cats.includes(4)) cells.push(`<td>${badgeHtml(record.alerts)}</td>`);
  if (cats.includes(5)) cells.push(`<td>${record.edd ? escapeHtml(record.edd) : "–"}</td>`);
  cells.push(`<td><button class="comment-btn" data-patient="${pid}" data-date="${escapeHtml(record.record_date)}" title="Leave feedback">✎</button></td>`);
  const rowClass = record.alerts.length ? ` class="row-${record.alerts.join("-")}"` : "";
  return `<tr${rowClass}>${cells.join("")}</tr>`;
}

export function tableHtml(records: PredictionRecord[], view: ViewConfig): string {
  if (records.length === 0) {
    return `<div class="empty-state">No inpatients match the current filters.</div>`;
  }
  const rows = records.map((r) => tableRowHtml(r, view)).join("\n");
  return `<table class="patient-table"><thead>${tableHeaderHtml(view)}</thead><tbody>${rows}</tbody></table>`;
}

/** Trajectory grid: one row per day of the stay, alert colors inline. */
export function trajectoryHtml(records: PredictionRecord[], view: ViewConfig): string {
  if (records.length === 0) {
    return `<div class="empty-state">No records for this patient.</div>`;
  }
  const header =
    "<tr><th>Date</th><th>Mortality</th><th>Discharge 24h</th><th>Discharge 48h</th>" +
    "<th>Final destination</th><th>Alerts</th></tr>";
  const rows = records
    .map((r) => {
      const pid = escapeHtml(r.patient_id);
      const cells = [
        `<td>${escapeHtml(r.record_date)}</td>`,
        `<td class="prob-cell" data-patient="${pid}" data-date="${r.record_date}" data-task="mortality">${formatProb(r.probabilities["mortality"] as number | null)}</td>`,
        `<td class="prob-cell" data-patient="${pid}" data-date="${r.record_date}" data-task="discharge_24">${formatProb(r.probabilities["discharge_24"] as number | null)}</td>`,
        `<td class="prob-cell" data-patient="${pid}" data-date="${r.record_date}" data-task="discharge_48">${arrowGlyph(r.delta_arrow)}${formatProb(r.probabilities["discharge_48"] as number | null)}</td>`,
        `<td class="prob-cell" data-patient="${pid}" data-date="${r.record_date}" data-task="disposition">${dispositionCell(r.probabilities["disposition"])}</td>`,
        `<td>${badgeHtml(r.alerts)}</td>`,
      ];
      const rowClass = r.alerts.length ? ` class="row-${r.alerts.join("-")}"` : "";
      return `<tr${rowClass}>${cells.join("")}</tr>`;
    })
    .join("\n");
  const title = escapeHtml(displayId(records[0].patient_id, view.revealIds));
  return `<h2>Stay trajectory: ${title}</h2><table class="trajectory-table"><thead>${header}</thead><tbody>${rows}</tbody></table>`;
}

export interface WaterfallView {
  svg: string;
  displayedSum: number;
  additivityOk: boolean;
}

/** Waterfall chart: bars in payload order (descending |contribution|),
 * positive red / negative blue, base and final values labeled, remainder
 * aggregated. The displayed parts always sum to the displayed prediction;
 * a client-side additivity check guards payload integrity. */
export function renderWaterfall(payload: WaterfallPayload, width = 560): WaterfallView {
  const rowH = 26;
  const labelW = 220;
  const chartW = width - labelW - 90;
  const items = [...payload.items];
  const bars: { label: string; value: number }[] = items.map((it) => ({
    label: it.value === null ? it.feature : `${it.feature} = ${Number(it.value.toFixed(3))}`,
    value: it.contribution,
  }));
  if (payload.n_features > items.length || Math.abs(payload.remainder) > 0) {
    bars.push({
      label: `${Math.max(payload.n_features - items.length, 0)} remaining features`,
      value: payload.remainder,
    });
  }

  const displayedSum = bars.reduce((acc, b) => acc + b.value, 0);
  const additivityOk =
    Math.abs(payload.base_value + displayedSum - payload.prediction) <= 1e-9;

  const maxAbs = Math.max(1e-12, ...bars.map((b) => Math.abs(b.value)));
  const scale = (v: number) => (Math.abs(v) / maxAbs) * (chartW / 2);
  const mid = labelW + chartW / 2;
  const height = (bars.length + 2) * rowH + 30;

  let running = payload.base_value;
  const parts: string[] = [];
  parts.push(
    `<text x="${labelW}" y="18" class="wf-endpoint">baseline ${formatProb(payload.base_value)}</text>`,
  );
  bars.forEach((bar, i) => {
    const y = 30 + i * rowH;
    const w = Math.max(1, scale(bar.value));
    const x = bar.value >= 0 ? mid : mid - w;
    const cls = bar.value >= 0 ? "wf-bar-pos" : "wf-bar-neg";
    running += bar.value;
    parts.push(
      `<text x="${labelW - 8}" y="${y + 15}" text-anchor="end" class="wf-label">${escapeHtml(bar.label)}</text>`,
      `<rect x="${x.toFixed(1)}" y="${y + 4}" width="${w.toFixed(1)}" height="${rowH - 10}" class="${cls}"></rect>`,
      `<text x="${(bar.value >= 0 ? mid + w + 6 : mid - w - 6).toFixed(1)}" y="${y + 15}" ` +
        `text-anchor="${bar.value >= 0 ? "start" : "end"}" class="wf-value">` +
        `${bar.value >= 0 ? "+" : ""}${(bar.value * 100).toFixed(2)}%</text>`,
    );
  });
  parts.push(
    `<line x1="${mid}" y1="24" x2="${mid}" y2="${height - rowH}" class="wf-axis"></line>`,
    `<text x="${labelW}" y="${height - 8}" class="wf-endpoint">prediction ${formatProb(payload.prediction)}</text>`,
  );
  const svg = `<svg viewBox="0 0 ${width} ${height}" class="waterfall" role="img">${parts.join("")}</svg>`;
  return { svg, displayedSum, additivityOk };
}

export function waterfallHtml(payload: WaterfallPayload, task: string): string {
  const view = renderWaterfall(payload);
  const warning = view.additivityOk
    ? ""
    : `<div class="banner banner-warning">Integrity check failed: contributions do not sum to the prediction.</div>`;
  const classNote =
    payload.class_index !== undefined
      ? `<p class="wf-note">Explaining the predicted class: ${escapeHtml(DISPOSITION_CLASSES[payload.class_index] ?? String(payload.class_index))}</p>`
      : "";
  return `<h3>Why ${escapeHtml(task)} = ${formatProb(payload.prediction)}</h3>${classNote}${warning}${view.svg}`;
}

export function errorBannerHtml(message: string): string {
  return `<div class="banner banner-error">${escapeHtml(message)} <button class="retry-btn">Retry</button></div>`;
}
