// DOM rendering for the 800x480 touch layout. Pure function of state;
// all interactive elements are oversized for finger input.

import { ConsoleState, formatParasitemia } from "./state.js";

export interface ViewHandles {
  banner: HTMLElement;
  previewImage: HTMLImageElement;
  overlayImage: HTMLImageElement;
  previewPane: HTMLElement;
  reviewPane: HTMLElement;
  errorPane: HTMLElement;
  errorDetail: HTMLElement;
  captureButton: HTMLButtonElement;
  saveButton: HTMLButtonElement;
  discardButton: HTMLButtonElement;
  retryButton: HTMLButtonElement;
  syncButton: HTMLButtonElement;
  counts: {
    infected: HTMLElement;
    uninfected: HTMLElement;
    parasitemia: HTMLElement;
    wbc: HTMLElement;
    platelet: HTMLElement;
  };
  syncBadge: HTMLElement;
  syncReport: HTMLElement;
  inlineError: HTMLElement;
}

export function lookupHandles(root: Document): ViewHandles {
  const get = (id: string) => {
    const el = root.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el;
  };
  return {
    banner: get("banner"),
    previewImage: get("preview-image") as HTMLImageElement,
    overlayImage: get("overlay-image") as HTMLImageElement,
    previewPane: get("preview-pane"),
    reviewPane: get("review-pane"),
    errorPane: get("error-pane"),
    errorDetail: get("error-detail"),
    captureButton: get("capture-button") as HTMLButtonElement,
    saveButton: get("save-button") as HTMLButtonElement,
    discardButton: get("discard-button") as HTMLButtonElement,
    retryButton: get("retry-button") as HTMLButtonElement,
    syncButton: get("sync-button") as HTMLButtonElement,
    counts: {
      infected: get("count-infected"),
      uninfected: get("count-uninfected"),
      parasitemia: get("count-parasitemia"),
      wbc: get("count-wbc"),
      platelet: get("count-platelet"),
    },
    syncBadge: get("sync-badge"),
    syncReport: get("sync-report"),
    inlineError: get("inline-error"),
  };
}

export function renderView(view: ViewHandles, state: ConsoleState): void {
  view.banner.textContent = state.banner ?? "";
  view.banner.classList.toggle("hidden", state.banner === null);

  view.previewPane.classList.toggle("hidden", state.mode !== "preview");
  view.reviewPane.classList.toggle(
    "hidden", state.mode !== "reviewing" && state.mode !== "saving");
  view.errorPane.classList.toggle("hidden", state.mode !== "error");

  if (state.previewUrl) view.previewImage.src = state.previewUrl;
  if (state.overlayUrl && view.overlayImage.src !== state.overlayUrl) {
    view.overlayImage.src = state.overlayUrl;
  }

  view.captureButton.disabled =
    state.captureInFlight || !state.previewAvailable || state.mode !== "preview";
  view.saveButton.disabled = state.mode !== "reviewing";
  view.discardButton.disabled = state.mode !== "reviewing";
  view.syncButton.disabled = state.syncInFlight;

  const summary = state.summary;
  if (summary) {
    view.counts.infected.textContent = String(summary.infected_count);
    view.counts.uninfected.textContent = String(summary.uninfected_count);
    view.counts.parasitemia.textContent = formatParasitemia(summary.parasitemia_pct);
    view.counts.parasitemia.title = String(summary.parasitemia_pct);
    view.counts.wbc.textContent = String(summary.wbc_count);
    view.counts.platelet.textContent = String(summary.platelet_count);
  }

  view.errorDetail.textContent = state.errorDetail ?? "";
  view.inlineError.textContent = state.inlineError ?? "";
  view.inlineError.classList.toggle("hidden", state.inlineError === null);

  const badge = state.sync;
  view.syncBadge.textContent =
    `pending ${badge.pending} · synced ${badge.synced} · failed ${badge.failed}`;
  view.syncReport.textContent = state.lastSyncReport
    ? `last sync: uploaded ${state.lastSyncReport.uploaded}, ` +
      `failed ${state.lastSyncReport.failed}, skipped ${state.lastSyncReport.skipped}`
    : "";
}
