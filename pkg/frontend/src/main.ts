/** Entry point: topic picker -> start a session -> mount the workbench. */

import { ApiClient } from "./api.js";
import { UiSession } from "./session.js";
import { Workbench } from "./workbench.js";

const DEFAULT_K = 25;

export async function mount(root: HTMLElement, client: ApiClient): Promise<void> {
  root.replaceChildren();
  const form = document.createElement("form");
  form.className = "start-screen";

  let topicSelect: HTMLSelectElement;
  try {
    const topics = await client.topics();
    topicSelect = document.createElement("select");
    topicSelect.name = "topic";
    for (const topic of topics) {
      const option = document.createElement("option");
      option.value = topic.topic_id;
      option.textContent = `${topic.topic_id} — ${topic.title_query} (${topic.pool_size} docs)`;
      topicSelect.appendChild(option);
    }
  } catch (err) {
    renderStartError(root, client, err);
    return;
  }

  const kInput = numberInput("k", DEFAULT_K, 1);
  const alpha = numberInput("alpha", 1, 0, 0.1);
  const beta = numberInput("beta", 1, 0, 0.1);
  const gamma = numberInput("gamma", 1, 0, 0.1);
  const startButton = document.createElement("button");
  startButton.type = "submit";
  startButton.textContent = "Start screening";

  form.append(
    labeled("Topic", topicSelect),
    labeled("Batch size k", kInput),
    labeled("alpha", alpha),
    labeled("beta", beta),
    labeled("gamma", gamma),
    startButton,
  );
  root.appendChild(form);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      startButton.disabled = true;
      try {
        const session = await UiSession.start(client, {
          topic_id: topicSelect.value,
          strategy: "dense_rocchio",
          k: Number(kInput.value),
          weights: {
            alpha: Number(alpha.value),
            beta: Number(beta.value),
            gamma: Number(gamma.value),
          },
        });
        root.replaceChildren();
        const workbench = new Workbench(root, session);
        workbench.attachKeyboard(document.body);
        workbench.render();
      } catch (err) {
        renderStartError(root, client, err);
      } finally {
        startButton.disabled = false;
      }
    })();
  });
}

function renderStartError(root: HTMLElement, client: ApiClient, err: unknown): void {
  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.textContent = err instanceof Error ? err.message : String(err);
  const retry = document.createElement("button");
  retry.className = "retry";
  retry.textContent = "Retry";
  retry.addEventListener("click", () => void mount(root, client));
  banner.appendChild(retry);
  root.replaceChildren(banner);
}

function labeled(text: string, control: HTMLElement): HTMLLabelElement {
  const label = document.createElement("label");
  label.textContent = text + " ";
  label.appendChild(control);
  return label;
}

function numberInput(name: string, value: number, min: number, step = 1): HTMLInputElement {
  const input = document.createElement("input");
  input.type = "number";
  input.name = name;
  input.value = String(value);
  input.min = String(min);
  input.step = String(step);
  return input;
}

declare global {
  interface Window {
    __screenprio_mounted?: Promise<void>;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.__screenprio_mounted = mount(
    document.getElementById("app") as HTMLElement,
    new ApiClient(""),
  );
}
