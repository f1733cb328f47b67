/** Client-side session state: the latest server-issued batch, the reviewer's
 * local (not yet submitted) judgments, and the accumulated screening trace.
 *
 * All relevance math lives on the server; this class only mirrors server
 * responses and enforces the submit gate (every doc judged, one submission
 * in flight at a time).
 */

import {
  ApiClient,
  ApiError,
  BatchDoc,
  CreateSessionRequest,
  Progress,
} from "./api.js";

export type LocalJudgment = "include" | "exclude";

export interface ScreenedRow {
  doc_id: string;
  judgment: LocalJudgment;
  iteration: number;
  rank: number;
}

const EMPTY_PROGRESS: Progress = {
  iteration: 0,
  screened: 0,
  relevant_found: 0,
  total: 0,
  recall_curve: [],
};

export class UiSession {
  batch: BatchDoc[] = [];
  batchToken: string | null = null;
  progress: Progress = EMPTY_PROGRESS;
  finished = false;
  submitting = false;
  /** doc_id -> local pending judgment for the current batch. */
  readonly pending = new Map<string, LocalJudgment>();
  /** Screening trace in service-issued order: one row per submitted doc. */
  readonly trace: ScreenedRow[] = [];

  private constructor(
    private readonly client: ApiClient,
    readonly sessionId: string,
  ) {}

  static async start(client: ApiClient, request: CreateSessionRequest): Promise<UiSession> {
    const created = await client.createSession(request);
    const session = new UiSession(client, created.session_id);
    session.batch = created.batch;
    session.batchToken = created.batch_token;
    session.progress = created.progress;
    return session;
  }

  judge(docId: string, judgment: LocalJudgment): void {
    if (!this.batch.some((d) => d.doc_id === docId)) {
      throw new Error(`document ${docId} is not in the current batch`);
    }
    this.pending.set(docId, judgment);
  }

  allJudged(): boolean {
    return this.batch.length > 0 && this.batch.every((d) => this.pending.has(d.doc_id));
  }

  canSubmit(): boolean {
    return !this.finished && !this.submitting && this.batchToken !== null && this.allJudged();
  }

  /** Post the pending judgments. On a conflict (stale token or a racing
   * submission) the session re-syncs from the server instead of failing. */
  async submit(): Promise<void> {
    if (!this.canSubmit() || this.batchToken === null) {
      throw new Error("submit gate: every document in the batch must be judged first");
    }
    this.submitting = true;
    try {
      const judgments = this.batch.map((d) => ({
        doc_id: d.doc_id,
        relevant: this.pending.get(d.doc_id) === "include",
      }));
      const iteration = this.progress.iteration + 1;
      const baseRank = this.trace.length;
      const submitted = this.batch;
      const applied = await this.client.submitJudgments(
        this.sessionId,
        this.batchToken,
        judgments,
      );
      submitted.forEach((doc, i) => {
        this.trace.push({
          doc_id: doc.doc_id,
          judgment: this.pending.get(doc.doc_id) as LocalJudgment,
          iteration,
          rank: baseRank + i + 1,
        });
      });
      this.pending.clear();
      this.progress = applied.progress;
      this.finished = applied.finished;
      this.batchToken = applied.batch_token;
      this.batch = applied.batch ?? [];
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh();
        return;
      }
      throw err;
    } finally {
      this.submitting = false;
    }
  }

  /** Re-sync batch, token, and progress from the server snapshot. Local
   * judgments for docs still in the outstanding batch are kept. */
  async refresh(): Promise<void> {
    const summary = await this.client.getSession(this.sessionId);
    this.finished = summary.finished;
    this.batchToken = summary.batch_token;
    this.progress = {
      ...this.progress,
      iteration: summary.iteration,
      screened: summary.screened,
      relevant_found: summary.relevant_found,
      total: summary.total,
    };
    const outstanding = summary.outstanding_batch ?? [];
    const docs: BatchDoc[] = [];
    for (const docId of outstanding) {
      const known = this.batch.find((d) => d.doc_id === docId);
      if (known) {
        docs.push(known);
      } else {
        const fetched = await this.client.document(docId);
        docs.push({ ...fetched, score: NaN });
      }
    }
    this.batch = docs;
    for (const docId of [...this.pending.keys()]) {
      if (!outstanding.includes(docId)) this.pending.delete(docId);
    }
  }

  /** The screening trace as CSV, rows in screened (concatenated-ranking)
   * order. Throws when nothing has been submitted yet. */
  exportCsv(): string {
    if (this.trace.length === 0) {
      throw new Error("nothing to export: no judged batches yet");
    }
    const lines = ["doc_id,judgment,iteration,rank"];
    for (const row of this.trace) {
      lines.push(`${row.doc_id},${row.judgment},${row.iteration},${row.rank}`);
    }
    return lines.join("\n") + "\n";
  }
}
