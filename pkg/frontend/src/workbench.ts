/** DOM rendering and keyboard handling for a screening session.
 *
 * Keys: ArrowUp/ArrowDown move the cursor, "i" marks include, "e" marks
 * exclude (both auto-advance), Enter submits once the whole batch is judged.
 */

import { UiSession } from "./session.js";

export interface WorkbenchOptions {
  onError?: (message: string) => void;
}

export class Workbench {
  cursor = 0;
  private errorMessage: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    readonly session: UiSession,
    private readonly options: WorkbenchOptions = {},
  ) {}

  attachKeyboard(target: { addEventListener: HTMLElement["addEventListener"] }): void {
    target.addEventListener("keydown", (event) => {
      this.handleKey((event as KeyboardEvent).key);
    });
  }

  handleKey(key: string): void {
    const docs = this.session.batch;
    if (key === "ArrowDown") {
      this.cursor = Math.min(this.cursor + 1, Math.max(docs.length - 1, 0));
    } else if (key === "ArrowUp") {
      this.cursor = Math.max(this.cursor - 1, 0);
    } else if (key === "i" || key === "e") {
      const doc = docs[this.cursor];
      if (doc && !this.session.finished) {
        this.session.judge(doc.doc_id, key === "i" ? "include" : "exclude");
        this.cursor = Math.min(this.cursor + 1, Math.max(docs.length - 1, 0));
      }
    } else if (key === "Enter") {
      if (this.session.canSubmit()) void this.submit();
      return;
    } else {
      return;
    }
    this.render();
  }

  async submit(): Promise<void> {
    this.errorMessage = null;
    try {
      await this.session.submit();
      this.cursor = 0;
    } catch (err) {
      this.errorMessage = err instanceof Error ? err.message : String(err);
      this.options.onError?.(this.errorMessage);
    }
    this.render();
  }

  render(): void {
    const s = this.session;
    this.root.replaceChildren();

    if (this.errorMessage) {
      const banner = el("div", "error-banner", this.errorMessage);
      const retry = el("button", "retry", "Retry");
      retry.addEventListener("click", () => void this.submit());
      banner.appendChild(retry);
      this.root.appendChild(banner);
    }

    this.root.appendChild(renderProgress(s));
    this.root.appendChild(renderRecallCurve(s.progress.recall_curve, s.progress.total));

    if (s.finished) {
      this.root.appendChild(this.renderCompletion());
      return;
    }

    const queue = document.createElement("ol");
    queue.className = "queue";
    s.batch.forEach((doc, i) => {
      const item = document.createElement("li");
      item.dataset.docId = doc.doc_id;
      item.className = i === this.cursor ? "doc current" : "doc";
      const judged = s.pending.get(doc.doc_id);
      if (judged) item.classList.add(judged);
      item.appendChild(el("span", "judgment", judged ?? "—"));
      item.appendChild(el("strong", "title", doc.title));
      item.appendChild(el("p", "abstract", doc.abstract));
      item.appendChild(el("span", "score", Number.isNaN(doc.score) ? "" : doc.score.toFixed(4)));
      item.addEventListener("click", () => {
        this.cursor = i;
        this.render();
      });
      queue.appendChild(item);
    });
    this.root.appendChild(queue);

    const submit = document.createElement("button");
    submit.className = "submit";
    submit.textContent = "Submit batch";
    submit.disabled = !s.canSubmit();
    submit.addEventListener("click", () => void this.submit());
    this.root.appendChild(submit);
  }

  private renderCompletion(): HTMLElement {
    const s = this.session;
    const panel = el("section", "completion", "");
    panel.appendChild(el("h2", "", "Screening complete"));
    panel.appendChild(
      el(
        "p",
        "totals",
        `${s.progress.screened} screened, ${s.progress.relevant_found} relevant found`,
      ),
    );
    const exportButton = document.createElement("button");
    exportButton.className = "export";
    exportButton.textContent = "Export decisions (CSV)";
    exportButton.addEventListener("click", () => {
      try {
        downloadCsv(s.exportCsv(), `screening-${s.sessionId}.csv`);
      } catch (err) {
        panel.appendChild(
          el("p", "export-empty", err instanceof Error ? err.message : String(err)),
        );
      }
    });
    panel.appendChild(exportButton);
    return panel;
  }
}

function renderProgress(session: UiSession): HTMLElement {
  const p = session.progress;
  const bar = el("header", "progress", "");
  bar.appendChild(el("span", "iteration", `iteration ${p.iteration}`));
  bar.appendChild(el("span", "screened", `${p.screened} / ${p.total} screened`));
  bar.appendChild(el("span", "relevant", `${p.relevant_found} relevant`));
  return bar;
}

/** Documents-screened vs relevant-found curve, drawn only from the
 * server-supplied points — the UI computes no metric of its own. */
function renderRecallCurve(points: [number, number][], total: number): SVGSVGElement {
  const width = 320;
  const height = 120;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "recall-curve");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  const maxX = Math.max(total, 1);
  const maxY = Math.max(...points.map(([, found]) => found), 1);
  const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
  const coords = [[0, 0] as [number, number], ...points]
    .map(([x, y]) => `${(x / maxX) * width},${height - (y / maxY) * height}`)
    .join(" ");
  line.setAttribute("points", coords);
  line.setAttribute("fill", "none");
  line.setAttribute("stroke", "currentColor");
  svg.appendChild(line);
  return svg;
}

function el(tag: string, className: string, text: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function downloadCsv(csv: string, filename: string): void {
  const blob = new Blob([csv], { type: "text/csv" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}
