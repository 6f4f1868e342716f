/** Browser entry point: session form plus the app shell. */

import { ApiClient } from "./api.js";
import { App } from "./app.js";

function bootstrap(): void {
  const root = document.getElementById("app");
  const form = document.getElementById("session-form") as HTMLFormElement | null;
  const baseInput = document.getElementById("base-url") as HTMLInputElement | null;
  const csvInput = document.getElementById("csv-text") as HTMLTextAreaElement | null;
  if (!root || !form || !baseInput || !csvInput) return;

  let app: App | null = null;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const api = new ApiClient(baseInput.value.trim() || "http://127.0.0.1:8000");
    app = new App(root, api);
    void app.startSession({ csv_text: csvInput.value });
  });
}

bootstrap();
