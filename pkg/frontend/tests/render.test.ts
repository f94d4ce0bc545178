import { describe, expect, test } from "vitest";

import {
  arrowGlyph,
  badgeHtml,
  displayId,
  renderWaterfall,
  tableHtml,
  tableRowHtml,
  trajectoryHtml,
  waterfallHtml,
} from "../src/render";
import { DEFAULT_VIEW } from "../src/state";
import type { PredictionRecord, WaterfallPayload } from "../src/types";
import { goldenTrajectory } from "./golden";

const view = { ...DEFAULT_VIEW, hospital: "HA", date: "2023-03-24" };

function record(overrides: Partial<PredictionRecord>): PredictionRecord {
  return {
    hospital: "HA",
    patient_id: "HA-P1",
    record_date: "2023-03-24",
    department: "MED",
    unit: "MED 1",
    bed: "MED 1-01",
    service: "Hospital Medicine",
    level_of_care: "General",
    probabilities: {
      mortality: 0.1,
      discharge_24: 0.2,
      discharge_48: 0.3,
      disposition: [0.1, 0.6, 0.3],
      enter_icu_24: 0.01,
      enter_icu_48: 0.02,
      leave_icu_24: null,
      leave_icu_48: null,
    },
    previous_probabilities: null,
    deltas: null,
    delta_arrow: 0,
    alerts: [],
    alert_reasons: [],
    edd: null,
    ...overrides,
  };
}

describe("badges derive solely from the alert flags", () => {
  test("no alerts renders no badges", () => {
    expect(badgeHtml([])).toBe("");
  });

  test("green and red badges", () => {
    expect(badgeHtml(["green"])).toContain("badge-green");
    expect(badgeHtml(["red"])).toContain("badge-red");
    const both = badgeHtml(["green", "red"]);
    expect(both).toContain("badge-green");
    expect(both).toContain("badge-red");
  });

  test("a high probability without a flag gets no badge", () => {
    const r = record({ probabilities: { ...record({}).probabilities, mortality: 0.9 } });
    const html = tableRowHtml(r, view);
    expect(html).not.toContain("badge-");
  });
});

describe("delta arrow renders iff the server-computed flag is set", () => {
  test("glyphs by flag value", () => {
    expect(arrowGlyph(1)).toContain("↑");
    expect(arrowGlyph(-1)).toContain("↓");
    expect(arrowGlyph(0)).toBe("");
  });

  test("small delta shows no arrow even when deltas exist", () => {
    const r = record({
      deltas: { discharge_48: 0.09, mortality: 0.0 },
      delta_arrow: 0,
    });
    expect(tableRowHtml(r, view)).not.toContain("arrow-");
  });

  test("qualifying rise shows the up glyph in the 48-hr cell", () => {
    const r = record({ deltas: { discharge_48: 0.18 }, delta_arrow: 1 });
    const html = tableRowHtml(r, view);
    expect(html).toContain("arrow-up");
    expect(html).not.toContain("arrow-down");
  });

  test("golden stay arrows appear exactly when |delta48| >= 0.1", () => {
    for (const r of goldenTrajectory()) {
      const d = r.deltas?.["discharge_48"] as number | null | undefined;
      const html = tableRowHtml(r, view);
      if (d !== null && d !== undefined && Math.abs(d) >= 0.1) {
        expect(html).toContain("arrow-");
      } else {
        expect(html).not.toContain("arrow-");
      }
    }
  });
});

describe("table rendering", () => {
  test("matches snapshot for a simple row", () => {
    const r = record({ alerts: ["green"], delta_arrow: 1, deltas: { discharge_48: 0.15 }, edd: "2023-03-26" });
    expect(tableRowHtml(r, view)).toMatchSnapshot();
  });

  test("empty census renders the empty state", () => {
    expect(tableHtml([], view)).toContain("empty-state");
  });

  test("hiding category 3 removes the previous-day columns only", () => {
    const full = tableHtml([record({})], view);
    const trimmed = tableHtml([record({})], { ...view, visibleCategories: [1, 2, 4, 5] });
    expect(full).toContain("Mortality Δ");
    expect(trimmed).not.toContain("Mortality Δ");
    expect(trimmed).toContain("Mortality"); // current-day columns remain
    expect(trimmed).toContain("Alerts");
  });

  test("category 1 cannot be hidden", () => {
    const html = tableHtml([record({})], { ...view, visibleCategories: [2] });
    expect(html).toContain("Department");
  });

  test("patient ids are de-identified unless revealed", () => {
    const masked = tableRowHtml(record({}), view);
    expect(masked).not.toContain(">HA-P1<");
    expect(masked).toContain("Patient ");
    const revealed = tableRowHtml(record({}), { ...view, revealIds: true });
    expect(revealed).toContain(">HA-P1<");
    // stable pseudonym
    expect(displayId("HA-P1", false)).toBe(displayId("HA-P1", false));
  });

  test("ICU cells show a dash when the task does not apply", () => {
    const html = tableRowHtml(record({}), view);
    expect(html).toContain("–");
  });
});

describe("waterfall chart", () => {
  const payload: WaterfallPayload = {
    base_value: 0.07,
    prediction: 0.238,
    scale: "probability",
    items: [
      { feature: "age", value: 83, contribution: 0.06 },
      { feature: "fall_risk_score_latest", value: 75, contribution: 0.05 },
      { feature: "orders_24h", value: 9, contribution: 0.03 },
      { feature: "rass_latest", value: 2, contribution: 0.02 },
      { feature: "heart_rate_mean_24h", value: 64, contribution: -0.012 },
      { feature: "lab_rdw", value: 13.1, contribution: -0.01 },
    ],
    remainder: 0.03,
    n_features: 30,
  };

  test("displayed bars sum exactly to the displayed prediction", () => {
    const wf = renderWaterfall(payload);
    expect(payload.base_value + wf.displayedSum).toBeCloseTo(payload.prediction, 9);
    expect(wf.additivityOk).toBe(true);
  });

  test("leading positive bars are the published example factors", () => {
    const wf = renderWaterfall(payload);
    const firstLabel = wf.svg.indexOf("age = 83");
    const secondLabel = wf.svg.indexOf("fall_risk_score_latest");
    expect(firstLabel).toBeGreaterThan(-1);
    expect(secondLabel).toBeGreaterThan(firstLabel);
    expect(wf.svg).toContain("wf-bar-pos");
    expect(wf.svg).toContain("wf-bar-neg");
    expect(wf.svg).toContain("baseline 7.00%");
    expect(wf.svg).toContain("prediction 23.80%");
  });

  test("failed additivity renders the integrity warning", () => {
    const bad = { ...payload, remainder: 0.2 };
    expect(waterfallHtml(bad, "mortality")).toContain("Integrity check failed");
    expect(waterfallHtml(payload, "mortality")).not.toContain("Integrity check failed");
  });

  test("all-zero contributions render a flat base-to-prediction chart", () => {
    const flat: WaterfallPayload = {
      base_value: 0.2,
      prediction: 0.2,
      scale: "probability",
      items: [],
      remainder: 0,
      n_features: 12,
    };
    const wf = renderWaterfall(flat);
    expect(wf.additivityOk).toBe(true);
    expect(wf.svg).toContain("baseline 20.00%");
    expect(wf.svg).toContain("prediction 20.00%");
  });

  test("snapshot", () => {
    expect(waterfallHtml(payload, "mortality")).toMatchSnapshot();
  });
});

describe("trajectory view reproduces the golden sequence", () => {
  test("one row per day, red on day 3, greens on the final two days", () => {
    const html = trajectoryHtml(goldenTrajectory(), view);
    const rows = html.match(/<tr[ >]/g) ?? [];
    expect(rows.length).toBe(8); // header + 7 days
    const lines = html.split("\n");
    const redRows = lines.filter((l) => l.includes("badge-red"));
    const greenRows = lines.filter((l) => l.includes("badge-green"));
    expect(redRows.length).toBe(1);
    expect(redRows[0]).toContain("2023-03-24");
    expect(redRows[0]).toContain("23.82%");
    expect(greenRows.length).toBe(2);
    expect(greenRows[0]).toContain("2023-03-27");
    expect(greenRows[1]).toContain("2023-03-28");
    // dates ascend
    const dates = [...html.matchAll(/<td>(2023-03-\d\d)<\/td>/g)].map((m) => m[1]);
    expect(dates).toEqual([...dates].sort());
  });

  test("destination column shows the with-service class", () => {
    const html = trajectoryHtml(goldenTrajectory(), view);
    expect(html).toContain("With service");
  });

  test("snapshot", () => {
    expect(trajectoryHtml(goldenTrajectory(), view)).toMatchSnapshot();
  });
});
