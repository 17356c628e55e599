// Application bootstrap: wires the static shell to the API client and the
// session reducers. One in-flight query at a time; the threshold slider is
// a per-request override and never mutates server configuration.

import { AnswerBankClient } from "./api.js";
import {
  beginQuery,
  directRatio,
  formatRatio,
  newSession,
  recordAnswer,
  recordError,
  type SessionState,
} from "./state.js";
import { renderPanelError, renderSourcePanel, renderTurns } from "./ui.js";

function must<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function message(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

export function bootstrap(): void {
  const chatLog = must<HTMLElement>("chat-log");
  const form = must<HTMLFormElement>("query-form");
  const input = must<HTMLInputElement>("query-input");
  const send = must<HTMLButtonElement>("send-button");
  const slider = must<HTMLInputElement>("threshold-slider");
  const sliderValue = must<HTMLElement>("threshold-value");
  const ratioValue = must<HTMLElement>("ratio-value");
  const baseUrlInput = must<HTMLInputElement>("base-url-input");
  const statusLine = must<HTMLElement>("status-line");
  const sourcePanel = must<HTMLElement>("source-panel");

  const client = new AnswerBankClient(baseUrlInput.value);
  let session: SessionState = newSession();

  const showSource = (nodeId: string): void => {
    client
      .sources(nodeId)
      .then((source) => sourcePanel.replaceChildren(renderSourcePanel(source)))
      .catch((error: unknown) =>
        sourcePanel.replaceChildren(renderPanelError(message(error))),
      );
  };

  const render = (): void => {
    renderTurns(chatLog, session, showSource);
    ratioValue.textContent = formatRatio(directRatio(session));
    send.disabled = session.inFlight;
    chatLog.scrollTop = chatLog.scrollHeight;
  };

  const refreshStatus = (): void => {
    client
      .health()
      .then((health) => {
        statusLine.textContent =
          `${health.status} · index ${health.index_size}` +
          ` · bank ${health.bank_size}`;
      })
      .catch((error: unknown) => {
        statusLine.textContent = `service unreachable: ${message(error)}`;
      });
    client
      .config()
      .then((config) => {
        slider.value = String(config.threshold);
        sliderValue.textContent = slider.value;
      })
      .catch(() => {
        // Slider keeps its shell default; queries still carry an override.
      });
  };

  slider.addEventListener("input", () => {
    sliderValue.textContent = slider.value;
  });

  baseUrlInput.addEventListener("change", () => {
    client.setBaseUrl(baseUrlInput.value);
    refreshStatus();
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (text === "" || session.inFlight) {
      return;
    }
    session = beginQuery(session);
    render();
    const threshold = Number(slider.value);
    client
      .query(text, threshold)
      .then((response) => {
        session = recordAnswer(session, text, response);
      })
      .catch((error: unknown) => {
        session = recordError(session, text, message(error));
      })
      .then(() => {
        input.value = "";
        render();
        input.focus();
      });
  });

  sliderValue.textContent = slider.value;
  render();
  refreshStatus();
}
