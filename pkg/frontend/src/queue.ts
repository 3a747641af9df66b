// Offline-safe label queue: POSTs are keyed by (pair_id, annotator) so
// retries stay idempotent; failed sends stay queued and flush on demand.

import { ApiClient, ConflictError, LabelPayload } from "./api";

export type SendOutcome = "sent" | "conflict" | "queued";

export class LabelQueue {
  private pending = new Map<string, LabelPayload>();
  onConflict: ((payload: LabelPayload) => void) | null = null;

  constructor(private api: ApiClient) {}

  private key(p: LabelPayload): string {
    return `${p.pair_id}::${p.annotator}`;
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  async send(payload: LabelPayload): Promise<SendOutcome> {
    this.pending.set(this.key(payload), payload);
    try {
      await this.api.postLabel(payload);
      this.pending.delete(this.key(payload));
      return "sent";
    } catch (err) {
      if (err instanceof ConflictError) {
        this.pending.delete(this.key(payload));
        this.onConflict?.(payload);
        return "conflict";
      }
      return "queued"; // network failure: keep for retry
    }
  }

  async flush(): Promise<number> {
    let sent = 0;
    for (const payload of [...this.pending.values()]) {
      const outcome = await this.send(payload);
      if (outcome !== "queued") sent++;
    }
    return sent;
  }
}
