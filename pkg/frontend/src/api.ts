/**
 * Typed client for the annotation service endpoints.
 *
 * The fetch implementation is injectable so the logic is testable without
 * a browser or a running server.
 */

export type Condition = {
  index: number;
  name: string;
};

export type TaskProgress = {
  done: number;
  total: number;
};

export type NextTask =
  | { done: false; crop_id: string; image_url: string; progress: TaskProgress }
  | { done: true; count: number };

export type StoredAnnotation = {
  rater_id: string;
  group: string;
  image_id: string;
  fdi: number;
  labels: number[];
  crop_id: string;
  timestamp: number;
};

export type KappaRow = {
  condition_index: number;
  name: string;
  kappa: number | null;
  degenerate: boolean;
};

export type Agreement = {
  completion: Record<string, number>;
  total_items: number;
  complete_raters: string[];
  kappa?: KappaRow[];
};

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  getConditions(): Promise<Condition[]> {
    return this.request<Condition[]>('/conditions');
  }

  getNextTask(rater: string): Promise<NextTask> {
    return this.request<NextTask>(`/tasks/next?rater=${encodeURIComponent(rater)}`);
  }

  submitAnnotation(rater: string, cropId: string, labels: number[]): Promise<StoredAnnotation> {
    return this.request<{ stored: StoredAnnotation }>('/annotations', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ rater, crop_id: cropId, labels }),
    }).then((body) => body.stored);
  }

  getAgreement(): Promise<Agreement> {
    return this.request<Agreement>('/agreement');
  }

  imageUrl(task: { image_url: string }): string {
    return this.baseUrl + task.image_url;
  }
}
