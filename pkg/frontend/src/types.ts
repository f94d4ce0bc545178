/** Payload shapes mirrored from the prediction API. */

export type Task =
  | "mortality"
  | "disposition"
  | "discharge_24"
  | "discharge_48"
  | "enter_icu_24"
  | "enter_icu_48"
  | "leave_icu_24"
  | "leave_icu_48";

export const BINARY_TASKS: Task[] = [
  "mortality",
  "discharge_24",
  "discharge_48",
  "enter_icu_24",
  "enter_icu_48",
  "leave_icu_24",
  "leave_icu_48",
];

export const DISPOSITION_CLASSES = [
  "Expired / hospice",
  "Home without service",
  "With service",
];

export type ProbMap = Record<string, number | number[] | null>;

export interface PredictionRecord {
  hospital: string;
  patient_id: string;
  record_date: string;
  department: string;
  unit: string;
  bed: string;
  service: string;
  level_of_care: string;
  probabilities: ProbMap;
  previous_probabilities: ProbMap | null;
  deltas: ProbMap | null;
  delta_arrow: -1 | 0 | 1;
  alerts: ("green" | "red")[];
  alert_reasons: string[];
  edd: string | null;
}

export interface PatientsPage {
  records: PredictionRecord[];
  next_cursor: number | null;
  warning: string | null;
}

export interface WaterfallItem {
  feature: string;
  value: number | null;
  contribution: number;
}

export interface WaterfallPayload {
  base_value: number;
  prediction: number;
  scale: string;
  items: WaterfallItem[];
  remainder: number;
  n_features: number;
  class_index?: number;
}

export interface FeedbackEntry {
  author: string;
  hospital: string;
  patient_id: string;
  record_date: string;
  task: string;
  comment: string;
}

export interface Manifest {
  run_date: string;
  hospital: string;
  status: string;
}

/**
 * Per-user view settings. Column categories follow the five display groups:
 * 1 basic info, 2 current-day probabilities, 3 previous day / deltas,
 * 4 alerts, 5 expected discharge date. Category 1 is always visible.
 */
export interface ViewConfig {
  hospital: string;
  date: string;
  visibleCategories: number[];
  filters: { department?: string; alert?: "green" | "red"; patient_id?: string; unit?: string };
  revealIds: boolean;
}

export function normalizeView(view: ViewConfig): ViewConfig {
  const cats = new Set(view.visibleCategories);
  cats.add(1); // basic info can never be hidden
  return { ...view, visibleCategories: [...cats].sort() };
}
