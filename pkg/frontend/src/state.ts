// Review-board state machine. Pure of DOM concerns so the vetting logic is
// testable against a mocked or a real service client.
//
// Invariants the board maintains:
//   - an item leaves the visible queue the moment it is decided (optimistic),
//     and it is restored in place if the server rejects the decision;
//   - at most one in-flight decision request per item;
//   - after every confirmed decision the queue is topped back up to k and
//     the counters are reconciled against the server's metrics.

import {
  ApiClient,
  ApiError,
  ProjectMetrics,
  ReviewItem,
  ScorerSpec,
} from './api.js';

export type Verdict = 'approve' | 'reject';

export interface BoardState {
  projectId: string;
  k: number;
  queue: ReviewItem[];
  counters: ProjectMetrics | null;
  pendingTotal: number;
  inFlight: ReadonlySet<string>;
  itemErrors: Readonly<Record<string, string>>;
  complete: boolean;
  loading: boolean;
  rescoreRunning: boolean;
  toast: string | null;
}

export interface BoardOptions {
  reviewer: string;
  pollIntervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

export type Listener = (state: BoardState) => void;

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class ReviewBoard {
  private queue: ReviewItem[] = [];
  private counters: ProjectMetrics | null = null;
  private pendingTotal = 0;
  private inFlight = new Set<string>();
  private itemErrors: Record<string, string> = {};
  private loading = false;
  private rescoreRunning = false;
  private toast: string | null = null;
  private listeners: Listener[] = [];
  private readonly reviewer: string;
  private readonly pollIntervalMs: number;
  private readonly sleep: (ms: number) => Promise<void>;

  constructor(
    private readonly client: ApiClient,
    readonly projectId: string,
    readonly k: number,
    options: BoardOptions,
  ) {
    this.reviewer = options.reviewer;
    this.pollIntervalMs = options.pollIntervalMs ?? 400;
    this.sleep = options.sleep ?? defaultSleep;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  state(): BoardState {
    return {
      projectId: this.projectId,
      k: this.k,
      queue: [...this.queue],
      counters: this.counters,
      pendingTotal: this.pendingTotal,
      inFlight: new Set(this.inFlight),
      itemErrors: { ...this.itemErrors },
      complete: this.pendingTotal === 0 && this.queue.length === 0 && !this.loading,
      loading: this.loading,
      rescoreRunning: this.rescoreRunning,
      toast: this.toast,
    };
  }

  private emit(): void {
    const snapshot = this.state();
    for (const listener of this.listeners) {
      listener(snapshot);
    }
  }

  /** Fetch the top-k pending queue and the server's progress counters. */
  async load(): Promise<void> {
    this.loading = true;
    this.toast = null;
    this.emit();
    try {
      const [batch, summary] = await Promise.all([
        this.client.getBatch(this.projectId, this.k),
        this.client.getProject(this.projectId),
      ]);
      this.queue = batch.items.filter((item) => !this.inFlight.has(item.pair_id));
      this.pendingTotal = batch.pending_total;
      this.counters = summary.metrics;
    } catch (error) {
      this.toast = describeError(error);
    } finally {
      this.loading = false;
      this.emit();
    }
  }

  /** Optimistically decide one visible item; restore it on failure. */
  async decide(pairId: string, verdict: Verdict): Promise<boolean> {
    if (this.inFlight.has(pairId)) {
      return false; // one in-flight request per item
    }
    const index = this.queue.findIndex((item) => item.pair_id === pairId);
    if (index < 0) {
      return false;
    }
    const item = this.queue[index];
    this.queue.splice(index, 1);
    this.inFlight.add(pairId);
    delete this.itemErrors[pairId];
    this.emit();

    try {
      await this.client.postDecision(this.projectId, pairId, verdict, this.reviewer);
    } catch (error) {
      // rollback: the item is still pending on the server
      this.inFlight.delete(pairId);
      this.queue.splice(Math.min(index, this.queue.length), 0, item);
      this.itemErrors[pairId] = describeError(error);
      this.emit();
      return false;
    }

    this.inFlight.delete(pairId);
    await this.reconcile();
    return true;
  }

  /** Local-only: move an item to the back of the visible queue. */
  skip(pairId: string): void {
    const index = this.queue.findIndex((item) => item.pair_id === pairId);
    if (index >= 0) {
      const [item] = this.queue.splice(index, 1);
      this.queue.push(item);
      this.emit();
    }
  }

  /** Refill the queue to k and adopt the server's counters. */
  async reconcile(): Promise<void> {
    try {
      const [batch, summary] = await Promise.all([
        this.client.getBatch(this.projectId, this.k),
        this.client.getProject(this.projectId),
      ]);
      this.queue = batch.items.filter((item) => !this.inFlight.has(item.pair_id));
      this.pendingTotal = batch.pending_total;
      this.counters = summary.metrics;
    } catch (error) {
      this.toast = describeError(error);
    }
    this.emit();
  }

  /** POST a rescore, poll the job to completion, reload the queue. */
  async rescoreAndReload(scorer: ScorerSpec): Promise<boolean> {
    if (this.rescoreRunning) {
      return false;
    }
    this.rescoreRunning = true;
    this.toast = null;
    this.emit();
    try {
      const ticket = await this.client.postRescore(this.projectId, scorer);
      for (;;) {
        const job = await this.client.getJob(ticket.status_url);
        if (job.state === 'done') {
          break;
        }
        if (job.state === 'failed') {
          this.toast = `rescore failed: ${job.error ?? 'unknown error'}`;
          return false;
        }
        await this.sleep(this.pollIntervalMs);
      }
      await this.reconcile();
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.toast = 'a rescore is already running';
      } else {
        this.toast = describeError(error);
      }
      return false;
    } finally {
      this.rescoreRunning = false;
      this.emit();
    }
  }

  async fetchExport(): Promise<string> {
    return this.client.fetchExport(this.projectId);
  }

  exportUrl(): string {
    return this.client.exportUrl(this.projectId);
  }

  clearToast(): void {
    this.toast = null;
    this.emit();
  }
}

export function describeError(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.status}: ${error.message}`;
  }
  if (error instanceof Error) {
    return error.message;
  }
  return String(error);
}
