/** View configuration with per-user local persistence, and the feedback
 * submission flow (optimistic entry with rollback on rejection). */

import type { ApiClient } from "./api.js";
import { normalizeView, type FeedbackEntry, type ViewConfig } from "./types.js";

const STORAGE_KEY = "wardflow.view";

export const DEFAULT_VIEW: ViewConfig = {
  hospital: "HA",
  date: "",
  visibleCategories: [1, 2, 3, 4, 5],
  filters: {},
  revealIds: false,
};

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function loadView(storage: StorageLike): ViewConfig {
  const raw = storage.getItem(STORAGE_KEY);
  if (!raw) return { ...DEFAULT_VIEW };
  try {
    return normalizeView({ ...DEFAULT_VIEW, ...JSON.parse(raw) });
  } catch {
    return { ...DEFAULT_VIEW };
  }
}

export function saveView(storage: StorageLike, view: ViewConfig): ViewConfig {
  const normalized = normalizeView(view);
  storage.setItem(STORAGE_KEY, JSON.stringify(normalized));
  return normalized;
}

/** Latest successfully scored date, used as the default view date. */
export async function latestManifestDate(api: ApiClient, hospital: string): Promise<string | null> {
  const manifests = await api.manifests(hospital);
  const ok = manifests.filter((m) => m.status === "ok").map((m) => m.run_date);
  return ok.length ? ok.sort()[ok.length - 1] : null;
}

export type FeedbackState =
  | { phase: "pending"; entry: FeedbackEntry }
  | { phase: "accepted"; entry: FeedbackEntry; id: number }
  | { phase: "rejected"; entry: FeedbackEntry; reason: string }
  | { phase: "queued-failure"; entry: FeedbackEntry; reason: string };

/**
 * Submit feedback optimistically: the caller may already show the pending
 * entry; a rejection or network failure rolls it back with an explicit
 * state, never dropping the text silently.
 */
export async function submitFeedback(
  api: ApiClient,
  entry: FeedbackEntry,
): Promise<FeedbackState> {
  if (!entry.comment.trim()) {
    return { phase: "rejected", entry, reason: "empty comment" };
  }
  try {
    const { id } = await api.postFeedback(entry);
    return { phase: "accepted", entry, id };
  } catch (err) {
    const status = (err as { status?: number }).status;
    if (status !== undefined && status >= 400 && status < 500) {
      return {
        phase: "rejected",
        entry,
        reason: (err as Error).message || `rejected (${status})`,
      };
    }
    return {
      phase: "queued-failure",
      entry,
      reason:
        "could not reach the server; your comment was kept locally, retry when back online",
    };
  }
}
