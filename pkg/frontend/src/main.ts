/** Browser entry point: login, table view with filters and column toggles,
 * waterfall modal, trajectory view, feedback dialog, print support. */

import { ApiError, HttpApiClient, type ApiClient } from "./api.js";
import {
  errorBannerHtml,
  tableHtml,
  trajectoryHtml,
  waterfallHtml,
} from "./render.js";
import {
  DEFAULT_VIEW,
  latestManifestDate,
  loadView,
  saveView,
  submitFeedback,
} from "./state.js";
import type { ViewConfig } from "./types.js";

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

let api: ApiClient | null = null;
let view: ViewConfig = { ...DEFAULT_VIEW };

function setContent(html: string): void {
  $("#content").innerHTML = html;
}

function openModal(html: string): void {
  $("#modal-body").innerHTML = html;
  $("#modal").classList.remove("hidden");
}

function closeModal(): void {
  $("#modal").classList.add("hidden");
}

async function refreshTable(): Promise<void> {
  if (!api) return;
  try {
    const page = await api.patients({
      hospital: view.hospital,
      date: view.date,
      ...view.filters,
    });
    let html = "";
    if (page.warning) {
      html += `<div class="banner banner-warning">API warning: ${page.warning}</div>`;
    }
    html += tableHtml(page.records, view);
    setContent(html);
  } catch (err) {
    // non-blocking error banner with a retry affordance
    setContent(errorBannerHtml(`Could not load patients: ${(err as Error).message}`));
  }
}

async function showTrajectory(patientId: string): Promise<void> {
  if (!api) return;
  try {
    const records = await api.trajectory(view.hospital, patientId);
    setContent(
      `<button id="back-btn">← back to census</button>` + trajectoryHtml(records, view),
    );
  } catch (err) {
    setContent(errorBannerHtml(`Could not load trajectory: ${(err as Error).message}`));
  }
}

async function showWaterfall(patientId: string, date: string, task: string): Promise<void> {
  if (!api) return;
  try {
    const payload = await api.explanation(view.hospital, patientId, date, task);
    openModal(waterfallHtml(payload, task));
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      openModal(`<p>No explanation is stored for this prediction.</p>`);
    } else {
      openModal(`<p>Could not load the explanation: ${(err as Error).message}</p>`);
    }
  }
}

function feedbackForm(patientId: string, date: string): void {
  openModal(`
    <h3>Feedback on ${patientId} / ${date}</h3>
    <label>Task
      <select id="fb-task">
        <option>mortality</option><option>disposition</option>
        <option>discharge_24</option><option selected>discharge_48</option>
        <option>enter_icu_24</option><option>enter_icu_48</option>
        <option>leave_icu_24</option><option>leave_icu_48</option>
      </select>
    </label>
    <label>Author <input id="fb-author" placeholder="your id" /></label>
    <label>Comment <textarea id="fb-comment" rows="3"></textarea></label>
    <div id="fb-status"></div>
    <button id="fb-submit">Send</button>
  `);
  $("#fb-submit").addEventListener("click", async () => {
    const comment = ($("#fb-comment") as HTMLTextAreaElement).value;
    if (!comment.trim()) {
      $("#fb-status").textContent = "A comment is required.";
      return;
    }
    $("#fb-status").textContent = "Sending…";
    const state = await submitFeedback(api!, {
      author: ($("#fb-author") as HTMLInputElement).value || "anonymous",
      hospital: view.hospital,
      patient_id: patientId,
      record_date: date,
      task: ($("#fb-task") as HTMLSelectElement).value,
      comment,
    });
    if (state.phase === "accepted") {
      $("#fb-status").textContent = `Recorded (#${state.id}). Thank you.`;
    } else {
      $("#fb-status").textContent = `Not recorded: ${"reason" in state ? state.reason : ""}`;
    }
  });
}

function bindControls(): void {
  $("#hospital").addEventListener("change", async (e) => {
    view.hospital = (e.target as HTMLInputElement).value.trim().toUpperCase();
    const latest = api ? await latestManifestDate(api, view.hospital) : null;
    if (latest) {
      view.date = latest;
      ($("#date") as HTMLInputElement).value = latest;
    }
    view = saveView(localStorage, view);
    await refreshTable();
  });
  $("#date").addEventListener("change", async (e) => {
    view.date = (e.target as HTMLInputElement).value;
    view = saveView(localStorage, view);
    await refreshTable();
  });
  $("#filter-alert").addEventListener("change", async (e) => {
    const value = (e.target as HTMLSelectElement).value;
    view.filters.alert = value === "" ? undefined : (value as "green" | "red");
    view = saveView(localStorage, view);
    await refreshTable();
  });
  $("#filter-department").addEventListener("change", async (e) => {
    const value = (e.target as HTMLInputElement).value.trim();
    view.filters.department = value || undefined;
    view = saveView(localStorage, view);
    await refreshTable();
  });
  $("#filter-patient").addEventListener("change", async (e) => {
    const value = (e.target as HTMLInputElement).value.trim();
    view.filters.patient_id = value || undefined;
    view = saveView(localStorage, view);
    await refreshTable();
  });
  for (const cat of [2, 3, 4, 5]) {
    $(`#cat-${cat}`).addEventListener("change", async (e) => {
      const on = (e.target as HTMLInputElement).checked;
      const set = new Set(view.visibleCategories);
      if (on) set.add(cat);
      else set.delete(cat);
      view = saveView(localStorage, { ...view, visibleCategories: [...set] });
      await refreshTable();
    });
  }
  $("#reveal-ids").addEventListener("change", async (e) => {
    view.revealIds = (e.target as HTMLInputElement).checked;
    view = saveView(localStorage, view);
    await refreshTable();
  });
  $("#print-btn").addEventListener("click", () => window.print());
  $("#modal").addEventListener("click", (e) => {
    if ((e.target as HTMLElement).id === "modal") closeModal();
  });
  $("#modal-close").addEventListener("click", closeModal);

  // event delegation for cells rendered into #content
  $("#content").addEventListener("click", async (e) => {
    const target = (e.target as HTMLElement).closest<HTMLElement>(
      ".prob-cell, .patient-cell, .comment-btn, .retry-btn, #back-btn",
    );
    if (!target) return;
    if (target.id === "back-btn" || target.classList.contains("retry-btn")) {
      await refreshTable();
    } else if (target.classList.contains("prob-cell")) {
      await showWaterfall(target.dataset.patient!, target.dataset.date!, target.dataset.task!);
    } else if (target.classList.contains("patient-cell")) {
      await showTrajectory(target.dataset.patient!);
    } else if (target.classList.contains("comment-btn")) {
      feedbackForm(target.dataset.patient!, target.dataset.date!);
    }
  });
}

async function login(): Promise<void> {
  const token = ($("#token") as HTMLInputElement).value.trim();
  if (!token) return;
  const candidate = new HttpApiClient("", token);
  try {
    await candidate.manifests();
  } catch (err) {
    $("#login-status").textContent =
      err instanceof ApiError && err.status === 401
        ? "Invalid token."
        : `Could not reach the server: ${(err as Error).message}`;
    return;
  }
  api = candidate;
  $("#login").classList.add("hidden");
  $("#app").classList.remove("hidden");
  view = loadView(localStorage);
  ($("#hospital") as HTMLInputElement).value = view.hospital;
  if (!view.date) {
    const latest = await latestManifestDate(api, view.hospital);
    if (latest) view.date = latest;
  }
  ($("#date") as HTMLInputElement).value = view.date;
  for (const cat of [2, 3, 4, 5]) {
    ($(`#cat-${cat}`) as HTMLInputElement).checked = view.visibleCategories.includes(cat);
  }
  await refreshTable();
}

document.addEventListener("DOMContentLoaded", () => {
  bindControls();
  $("#login-btn").addEventListener("click", () => void login());
  ($("#token") as HTMLInputElement).addEventListener("keydown", (e) => {
    if (e.key === "Enter") void login();
  });
});
