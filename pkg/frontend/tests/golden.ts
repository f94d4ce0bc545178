/** The example seven-day stay served by the fixture API: deterioration
 * peaking on day 3 (red alert), recovery with green alerts on the final two
 * days, discharged to home with services. Mirrors the backend fixture. */

import type { PredictionRecord } from "../src/types";

const DAYS: [string, number, number, number, number[], string[]][] = [
  ["2023-03-22", 0.05, 0.04, 0.1, [0.05, 0.25, 0.7], []],
  ["2023-03-23", 0.0702, 0.03, 0.08, [0.07, 0.23, 0.7], []],
  ["2023-03-24", 0.2382, 0.02, 0.05, [0.24, 0.16, 0.6], ["red"]],
  ["2023-03-25", 0.15, 0.05, 0.12, [0.15, 0.2, 0.65], []],
  ["2023-03-26", 0.09, 0.1, 0.29, [0.09, 0.23, 0.68], []],
  ["2023-03-27", 0.06, 0.22, 0.47, [0.06, 0.25, 0.69], ["green"]],
  ["2023-03-28", 0.04, 0.41, 0.66, [0.04, 0.26, 0.7], ["green"]],
];

export function goldenTrajectory(): PredictionRecord[] {
  let prev: Record<string, number | number[] | null> | null = null;
  return DAYS.map(([date, mort, p24, p48, dispo, alerts]) => {
    const probs = {
      mortality: mort,
      discharge_24: p24,
      discharge_48: p48,
      disposition: dispo,
      enter_icu_24: null,
      enter_icu_48: null,
      leave_icu_24: null,
      leave_icu_48: null,
    };
    const deltas =
      prev === null
        ? null
        : Object.fromEntries(
            Object.entries(probs).map(([k, v]) => [
              k,
              typeof v === "number" && typeof prev![k] === "number"
                ? Number((v - (prev![k] as number)).toFixed(4))
                : null,
            ]),
          );
    const d48 = deltas ? (deltas["discharge_48"] as number | null) : null;
    const record: PredictionRecord = {
      hospital: "HA",
      patient_id: "HA-GOLD01",
      record_date: date,
      department: "MED",
      unit: "MED 1",
      bed: "MED 1-07",
      service: "Hospital Medicine",
      level_of_care: "General",
      probabilities: probs,
      previous_probabilities: prev,
      deltas,
      delta_arrow: d48 !== null && Math.abs(d48) >= 0.1 ? (d48 > 0 ? 1 : -1) : 0,
      alerts: alerts as ("green" | "red")[],
      alert_reasons: alerts.length ? ["fixture"] : [],
      edd: "2023-03-28",
    };
    prev = probs;
    return record;
  });
}
