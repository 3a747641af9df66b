// Annotation flow controller: fetch next pair, label with one keystroke,
// advance. Kept DOM-free so the contract tests drive it headlessly.

import { ApiClient, PairCard } from "./api";
import { LabelQueue, SendOutcome } from "./queue";

export type GuidelineTag = "object" | "ocr" | "semantic" | undefined;

export interface AnnotateView {
  card: PairCard | null;
  done: boolean;
  labeled: number;
  pendingRetries: number;
  conflictBanner: string | null;
  lastOutcome: SendOutcome | null;
}

export class AnnotateController {
  view: AnnotateView = {
    card: null,
    done: false,
    labeled: 0,
    pendingRetries: 0,
    conflictBanner: null,
    lastOutcome: null,
  };
  onChange: ((view: AnnotateView) => void) | null = null;

  constructor(
    private api: ApiClient,
    private queue: LabelQueue,
    public annotator: string,
    public conflictsMode = false,
  ) {
    this.queue.onConflict = (p) => {
      this.view.conflictBanner =
        `${p.annotator} already labelled ${p.pair_id}; ` +
        `a third annotator resolves two-way conflicts`;
      this.notify();
    };
  }

  private notify(): void {
    this.view.pendingRetries = this.queue.pendingCount;
    this.onChange?.({ ...this.view });
  }

  async advance(): Promise<void> {
    const card = await this.api.nextPair(this.annotator, this.conflictsMode);
    this.view.card = card.pair_id ? card : null;
    this.view.done = !card.pair_id;
    this.notify();
  }

  async label(
    label: "relevant" | "not_relevant",
    tag?: GuidelineTag,
    overwrite = false,
  ): Promise<SendOutcome | null> {
    const card = this.view.card;
    if (!card || !card.pair_id) return null;
    const outcome = await this.queue.send({
      pair_id: card.pair_id,
      annotator: this.annotator,
      label,
      guideline_tag: tag,
      overwrite,
    });
    this.view.lastOutcome = outcome;
    if (outcome !== "queued") this.view.labeled += 1;
    await this.advance();
    return outcome;
  }

  // keyboard shortcuts share the exact same path as the buttons
  async handleKey(key: string): Promise<SendOutcome | null> {
    if (key === "r") return this.label("relevant");
    if (key === "n") return this.label("not_relevant");
    if (key === "1") return this.label("relevant", "object");
    if (key === "2") return this.label("relevant", "ocr");
    if (key === "3") return this.label("relevant", "semantic");
    return null;
  }
}
