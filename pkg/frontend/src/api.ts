/** Thin client over the prediction API. Every number shown in the UI comes
 * from these payloads; the dashboard itself computes nothing predictive. */

import type {
  FeedbackEntry,
  Manifest,
  PatientsPage,
  PredictionRecord,
  WaterfallPayload,
} from "./types.js";

export interface ApiClient {
  patients(params: {
    hospital: string;
    date: string;
    department?: string;
    alert?: string;
    patient_id?: string;
    unit?: string;
  }): Promise<PatientsPage>;
  trajectory(hospital: string, patientId: string): Promise<PredictionRecord[]>;
  explanation(
    hospital: string,
    patientId: string,
    date: string,
    task: string,
  ): Promise<WaterfallPayload>;
  postFeedback(entry: FeedbackEntry): Promise<{ id: number }>;
  manifests(hospital?: string): Promise<Manifest[]>;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class HttpApiClient implements ApiClient {
  constructor(private baseUrl: string, private token: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init?.headers ?? {}),
      },
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        detail = (await response.json()).detail ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  patients(params: {
    hospital: string;
    date: string;
    department?: string;
    alert?: string;
    patient_id?: string;
    unit?: string;
  }): Promise<PatientsPage> {
    const qs = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
      if (value) qs.set(key, value);
    }
    return this.request<PatientsPage>(`/api/v1/patients?${qs}`);
  }

  async trajectory(hospital: string, patientId: string): Promise<PredictionRecord[]> {
    const body = await this.request<{ records: PredictionRecord[] }>(
      `/api/v1/patients/${encodeURIComponent(patientId)}/trajectory?hospital=${encodeURIComponent(hospital)}`,
    );
    return body.records;
  }

  explanation(
    hospital: string,
    patientId: string,
    date: string,
    task: string,
  ): Promise<WaterfallPayload> {
    return this.request<WaterfallPayload>(
      `/api/v1/explanations/${encodeURIComponent(hospital)}/${encodeURIComponent(patientId)}/${date}/${task}`,
    );
  }

  postFeedback(entry: FeedbackEntry): Promise<{ id: number }> {
    return this.request<{ id: number }>(`/api/v1/feedback`, {
      method: "POST",
      body: JSON.stringify(entry),
    });
  }

  async manifests(hospital?: string): Promise<Manifest[]> {
    const qs = hospital ? `?hospital=${encodeURIComponent(hospital)}` : "";
    const body = await this.request<{ manifests: Manifest[] }>(`/api/v1/manifests${qs}`);
    return body.manifests;
  }
}
