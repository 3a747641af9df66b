// Typed client for the annotation/calibration service. The UI displays only
// numbers returned by these endpoints; nothing is recomputed client-side.

export interface PairCard {
  pair_id: string | null;
  verbatim?: string;
  review_id?: string;
  category?: string;
  score?: number;
  image_url?: string;
  guidelines?: string[];
  remaining: number;
}

export interface LabelPayload {
  pair_id: string;
  annotator: string;
  label: "relevant" | "not_relevant";
  guideline_tag?: "object" | "ocr" | "semantic";
  overwrite?: boolean;
}

export interface CurvePoint {
  threshold: number;
  precision: number;
  recall: number;
  f1: number;
  coverage: number;
  tp: number;
  fp: number;
  fn: number;
  flags: string[];
}

export interface AgreementView {
  kappa: number | null;
  annotators: string[];
  co_annotated?: number;
  conflicts: string[];
}

export interface ThresholdSelection {
  threshold: number;
  policy: { kind: string; value: number | null };
}

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${this.base}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (resp.status === 409) {
      throw new ConflictError(await resp.text());
    }
    if (!resp.ok) {
      throw new Error(`${resp.status} ${resp.statusText}: ${await resp.text()}`);
    }
    return resp.json() as Promise<T>;
  }

  health(): Promise<{ status: string; pairs: number; queue: number }> {
    return this.request("/api/health");
  }

  nextPair(annotator: string, conflicts = false): Promise<PairCard> {
    const extra = conflicts ? "&conflicts=true" : "";
    return this.request(`/api/pairs/next?annotator=${encodeURIComponent(annotator)}${extra}`);
  }

  postLabel(payload: LabelPayload): Promise<{ ok: boolean }> {
    return this.request("/api/labels", { method: "POST", body: JSON.stringify(payload) });
  }

  agreement(): Promise<AgreementView> {
    return this.request("/api/agreement");
  }

  curves(grid?: string): Promise<{ points: CurvePoint[] }> {
    const q = grid ? `?grid=${encodeURIComponent(grid)}` : "";
    return this.request(`/api/curves${q}`);
  }

  async curvesCsv(grid?: string): Promise<string> {
    const q = grid ? `?grid=${encodeURIComponent(grid)}&format=csv` : "?format=csv";
    const resp = await fetch(`${this.base}/api/curves${q}`);
    if (!resp.ok) throw new Error(`${resp.status} ${resp.statusText}`);
    return resp.text();
  }

  applyPolicy(kind: string, value: number | null, grid?: string): Promise<ThresholdSelection> {
    return this.request("/api/threshold", {
      method: "POST",
      body: JSON.stringify({ kind, value, grid }),
    });
  }

  async imageBytes(url: string): Promise<ArrayBuffer> {
    const resp = await fetch(`${this.base}${url}`);
    if (!resp.ok) throw new Error(`image fetch failed: ${resp.status}`);
    return resp.arrayBuffer();
  }
}
