// Typed client for the device service REST API. The console talks to
// nothing else; every number it shows comes from these responses.

export interface ResultDoc {
  infected_count: number;
  uninfected_count: number;
  parasitemia_pct: number;
  wbc_count: number;
  platelet_count: number;
  overlay_ref: string;
  cells: unknown[];
}

export interface CaptureResponse {
  frame: string;
  result: ResultDoc;
  overlay: string;
}

export interface SyncBadge {
  pending: number;
  synced: number;
  failed: number;
}

export interface SessionDoc {
  has_result: boolean;
  unsaved: boolean;
  preview_available: boolean;
  sync: SyncBadge;
}

export interface SyncReport {
  uploaded: number;
  failed: number;
  skipped: number;
}

export interface RecordDoc {
  record_id: string;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, detail: string) {
    super(`${code}: ${detail}`);
  }
}

async function asError(response: Response): Promise<ApiError> {
  let code = `http-${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") code = body.error;
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, code, detail);
}

export class DeviceApi {
  constructor(private base: string = "") {}

  previewUrl(): string {
    // Cache-busting timestamp so the <img> refetches every poll tick.
    return `${this.base}/v1/preview?t=${Date.now()}`;
  }

  frameUrl(ref: string): string {
    return `${this.base}/v1/frames/${ref}`;
  }

  async session(): Promise<SessionDoc> {
    const response = await fetch(`${this.base}/v1/session`);
    if (!response.ok) throw await asError(response);
    return response.json();
  }

  async capture(): Promise<CaptureResponse> {
    const response = await fetch(`${this.base}/v1/capture`, { method: "POST" });
    if (!response.ok) throw await asError(response);
    return response.json();
  }

  async saveRecord(): Promise<RecordDoc> {
    const response = await fetch(`${this.base}/v1/records`, { method: "POST" });
    if (!response.ok) throw await asError(response);
    return response.json();
  }

  async sync(): Promise<SyncReport> {
    const response = await fetch(`${this.base}/v1/sync`, { method: "POST" });
    if (!response.ok) throw await asError(response);
    return response.json();
  }
}
