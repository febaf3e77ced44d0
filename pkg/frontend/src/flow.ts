import { ApiError } from "./client.js";
import type { AnswerLabel, HumanAnswer, PairPayload, Progress } from "./types.js";

// Annotators see same/different; the API speaks must-link/cannot-link.
export const LABEL_FOR_ANSWER: Record<HumanAnswer, AnswerLabel> = {
  same: "ml",
  different: "cl",
  skip: "skip",
};

export const ANSWER_FOR_KEY: Record<string, HumanAnswer> = {
  s: "same",
  d: "different",
  k: "skip",
};

export type FlowView =
  | { kind: "pair"; pair: PairPayload }
  | { kind: "batch-complete"; progress: Progress }
  | { kind: "done"; progress: Progress };

/** The slice of AnnotationClient the flow depends on; tests substitute fakes. */
export interface FlowClient {
  nextPair(): Promise<PairPayload | null>;
  answer(queryId: string, label: AnswerLabel): Promise<Progress>;
  advance(): Promise<Progress>;
  progress(): Promise<Progress>;
}

export type FlowOptions = {
  retries?: number;
  backoffMs?: number;
  sleep?: (ms: number) => Promise<void>;
};

const wait = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Drives one annotator through the query stream: fetch a pair, submit the
 * answer, fetch the next. Network failures are retried with exponential
 * backoff without losing the unanswered card; 409 conflicts surface as a
 * non-blocking notice and the flow continues from the server's state.
 */
export class AnnotateFlow {
  notice: string | null = null;
  progress: Progress | null = null;

  private readonly client: FlowClient;
  private readonly retries: number;
  private readonly backoffMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private current: PairPayload | null = null;

  constructor(client: FlowClient, options: FlowOptions = {}) {
    this.client = client;
    this.retries = options.retries ?? 4;
    this.backoffMs = options.backoffMs ?? 250;
    this.sleep = options.sleep ?? wait;
  }

  get currentPair(): PairPayload | null {
    return this.current;
  }

  clearNotice(): void {
    this.notice = null;
  }

  /** Pending card if one is outstanding, else a fresh draw or the batch state. */
  async refresh(): Promise<FlowView> {
    const pair = await this.withRetry(() => this.client.nextPair());
    if (pair !== null) {
      this.current = pair;
      return { kind: "pair", pair };
    }
    this.current = null;
    const progress = await this.withRetry(() => this.client.progress());
    this.progress = progress;
    if (progress.done) return { kind: "done", progress };
    return { kind: "batch-complete", progress };
  }

  /** Submit the answer for the card on screen, then fetch whatever comes next. */
  async submit(answer: HumanAnswer): Promise<FlowView> {
    if (this.current === null) return this.refresh();
    const queryId = this.current.query_id;
    try {
      const progress = await this.withRetry(() =>
        this.client.answer(queryId, LABEL_FOR_ANSWER[answer]),
      );
      this.progress = progress;
      this.notice = null;
      this.current = null;
    } catch (err) {
      if (!(err instanceof ApiError) || err.status !== 409) throw err;
      // conflict is non-blocking: note it and let the server decide what is next
      this.notice = err.message;
    }
    return this.refresh();
  }

  /** Close the cycle once the batch is complete. */
  async advanceCycle(): Promise<FlowView> {
    let progress: Progress;
    try {
      progress = await this.withRetry(() => this.client.advance());
    } catch (err) {
      if (!(err instanceof ApiError) || err.status !== 423) throw err;
      this.notice = err.message;
      return this.refresh();
    }
    this.progress = progress;
    if (progress.done) return { kind: "done", progress };
    return this.refresh();
  }

  private async withRetry<T>(fn: () => Promise<T>): Promise<T> {
    let delay = this.backoffMs;
    for (let attempt = 0; ; attempt++) {
      try {
        return await fn();
      } catch (err) {
        // an HTTP error is an answer, not an outage; only network faults retry
        if (err instanceof ApiError || attempt >= this.retries) throw err;
        await this.sleep(delay);
        delay *= 2;
      }
    }
  }
}
