/** In-memory fixture API used by the tests. */

import { ApiError, type ApiClient } from "../src/api";
import type {
  FeedbackEntry,
  Manifest,
  PatientsPage,
  PredictionRecord,
  WaterfallPayload,
} from "../src/types";

export class FakeApiClient implements ApiClient {
  feedback: (FeedbackEntry & { id: number })[] = [];
  offline = false;
  private nextId = 1;

  constructor(
    private records: PredictionRecord[],
    private explanations: Record<string, WaterfallPayload> = {},
  ) {}

  private ensureOnline(): void {
    if (this.offline) throw new TypeError("fetch failed: network unreachable");
  }

  async patients(params: {
    hospital: string;
    date: string;
    department?: string;
    alert?: string;
    patient_id?: string;
    unit?: string;
  }): Promise<PatientsPage> {
    this.ensureOnline();
    const known = this.records.some((r) => r.hospital === params.hospital);
    let rows = this.records.filter(
      (r) => r.hospital === params.hospital && r.record_date === params.date,
    );
    if (params.department) rows = rows.filter((r) => r.department === params.department);
    if (params.unit) rows = rows.filter((r) => r.unit === params.unit);
    if (params.patient_id) rows = rows.filter((r) => r.patient_id === params.patient_id);
    if (params.alert) rows = rows.filter((r) => r.alerts.includes(params.alert as never));
    rows = [...rows].sort((a, b) =>
      (a.department + a.patient_id).localeCompare(b.department + b.patient_id),
    );
    return {
      records: rows,
      next_cursor: null,
      warning: known ? null : "unknown_hospital",
    };
  }

  async trajectory(hospital: string, patientId: string): Promise<PredictionRecord[]> {
    this.ensureOnline();
    const rows = this.records
      .filter((r) => r.hospital === hospital && r.patient_id === patientId)
      .sort((a, b) => a.record_date.localeCompare(b.record_date));
    if (!rows.length) throw new ApiError(404, "patient not found");
    return rows;
  }

  async explanation(
    hospital: string,
    patientId: string,
    date: string,
    task: string,
  ): Promise<WaterfallPayload> {
    this.ensureOnline();
    const key = `${hospital}/${patientId}/${date}/${task}`;
    const payload = this.explanations[key];
    if (!payload) throw new ApiError(404, "explanation not found");
    return payload;
  }

  async postFeedback(entry: FeedbackEntry): Promise<{ id: number }> {
    this.ensureOnline();
    const exists = this.records.some(
      (r) =>
        r.hospital === entry.hospital &&
        r.patient_id === entry.patient_id &&
        r.record_date === entry.record_date,
    );
    if (!exists) throw new ApiError(404, "no prediction record for that reference");
    const stored = { ...entry, id: this.nextId++ };
    this.feedback.push(stored);
    return { id: stored.id };
  }

  async manifests(hospital?: string): Promise<Manifest[]> {
    this.ensureOnline();
    const dates = [...new Set(this.records.map((r) => r.record_date))].sort();
    return dates.map((d) => ({
      run_date: d,
      hospital: hospital ?? "HA",
      status: "ok",
    }));
  }
}
