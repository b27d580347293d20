import { DeviceApi } from "./api.js";
import { Console } from "./state.js";
import { lookupHandles, renderView } from "./view.js";

const POLL_INTERVAL_MS = 500;

window.addEventListener("DOMContentLoaded", () => {
  const api = new DeviceApi("");
  const view = lookupHandles(document);
  const console_ = new Console(api, (state) => renderView(view, state));

  view.captureButton.addEventListener("click", () => void console_.capture());
  view.saveButton.addEventListener("click", () => void console_.save());
  view.discardButton.addEventListener("click", () => console_.discard());
  view.retryButton.addEventListener("click", () => console_.dismissError());
  view.syncButton.addEventListener("click", () => void console_.runSync());

  void console_.tick();
  setInterval(() => void console_.tick(), POLL_INTERVAL_MS);
});
