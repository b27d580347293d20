// Console state machine: Preview <-> Reviewing -> Saving -> Preview, with
// a non-blocking banner for connectivity and an Error mode for failed
// captures. All medical numbers pass through verbatim from the service;
// the console never recomputes them.

import {
  ApiError,
  CaptureResponse,
  DeviceApi,
  ResultDoc,
  SyncBadge,
  SyncReport,
} from "./api.js";

export type Mode = "preview" | "reviewing" | "saving" | "error";

export interface ConsoleState {
  mode: Mode;
  previewUrl: string | null;
  overlayUrl: string | null;
  summary: ResultDoc | null;
  banner: string | null;       // connectivity problems; never blanks the UI
  inlineError: string | null;  // save/sync failures inside the current mode
  errorDetail: string | null;  // Error-mode explanation with retry
  sync: SyncBadge;
  captureInFlight: boolean;
  syncInFlight: boolean;
  lastSyncReport: SyncReport | null;
  previewAvailable: boolean;
}

export function initialState(): ConsoleState {
  return {
    mode: "preview",
    previewUrl: null,
    overlayUrl: null,
    summary: null,
    banner: null,
    inlineError: null,
    errorDetail: null,
    sync: { pending: 0, synced: 0, failed: 0 },
    captureInFlight: false,
    syncInFlight: false,
    lastSyncReport: null,
    previewAvailable: true,
  };
}

export type RenderFn = (state: ConsoleState) => void;

export class Console {
  readonly state: ConsoleState;

  constructor(private api: DeviceApi, private render: RenderFn = () => {}) {
    this.state = initialState();
  }

  private paint(): void {
    this.render(this.state);
  }

  /** One poll tick: refresh the sync badge and, in preview mode, the frame. */
  async tick(): Promise<void> {
    if (this.state.captureInFlight) return; // poll pauses during capture
    try {
      const session = await this.api.session();
      this.state.sync = session.sync;
      this.state.previewAvailable = session.preview_available;
      this.state.banner = null;
      if (this.state.mode === "preview" && session.preview_available) {
        this.state.previewUrl = this.api.previewUrl();
      }
    } catch {
      // Keep the last frame; surface the outage without blanking anything.
      this.state.banner = "device unreachable";
    }
    this.paint();
  }

  /** Capture button. No-op while a capture is already in flight. */
  async capture(): Promise<void> {
    if (this.state.captureInFlight || this.state.mode !== "preview") return;
    this.state.captureInFlight = true;
    this.state.inlineError = null;
    this.paint();
    try {
      const response: CaptureResponse = await this.api.capture();
      this.state.summary = response.result;
      this.state.overlayUrl = this.api.frameUrl(response.overlay);
      this.state.mode = "reviewing";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state.banner = "no slide frame available";
      } else {
        this.state.mode = "error";
        this.state.errorDetail =
          err instanceof Error ? err.message : "capture failed";
      }
    } finally {
      this.state.captureInFlight = false;
      this.paint();
    }
  }

  /** Save the reviewed result; stays in Reviewing if the device refuses. */
  async save(): Promise<void> {
    if (this.state.mode !== "reviewing") return;
    this.state.mode = "saving";
    this.state.inlineError = null;
    this.paint();
    try {
      await this.api.saveRecord();
      try {
        const session = await this.api.session();
        this.state.sync = session.sync;
      } catch {
        this.state.banner = "device unreachable";
      }
      this.state.mode = "preview";
      this.state.summary = null;
      this.state.overlayUrl = null;
    } catch (err) {
      // Result is not lost: back to Reviewing with an inline error.
      this.state.mode = "reviewing";
      this.state.inlineError =
        err instanceof Error ? err.message : "save failed";
    }
    this.paint();
  }

  /** Discard the reviewed result locally; no request is made. */
  discard(): void {
    if (this.state.mode !== "reviewing") return;
    this.state.summary = null;
    this.state.overlayUrl = null;
    this.state.inlineError = null;
    this.state.mode = "preview";
    this.paint();
  }

  /** Leave Error mode back to the live preview. */
  dismissError(): void {
    if (this.state.mode !== "error") return;
    this.state.mode = "preview";
    this.state.errorDetail = null;
    this.paint();
  }

  /** Sync button; the report and refreshed badge both come from the device. */
  async runSync(): Promise<void> {
    if (this.state.syncInFlight) return;
    this.state.syncInFlight = true;
    this.state.lastSyncReport = null;
    this.paint();
    try {
      this.state.lastSyncReport = await this.api.sync();
      this.state.inlineError = null;
    } catch (err) {
      this.state.inlineError =
        err instanceof Error ? err.message : "sync failed";
    }
    try {
      const session = await this.api.session();
      this.state.sync = session.sync;
    } catch {
      this.state.banner = "device unreachable";
    }
    this.state.syncInFlight = false;
    this.paint();
  }
}

/** Display-only formatting; raw values stay untouched in state. */
export function formatParasitemia(pct: number): string {
  return `${pct.toFixed(1)}%`;
}
