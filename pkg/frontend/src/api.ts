/**
 * Typed client for the labeling service endpoints.
 *
 * The console never invents data: tasks render exactly what the server
 * sends, and a label submission carries exactly the digit the user chose.
 */

export interface TaskPayload {
  task_id: number;
  instance_id: number;
  png_b64: string;
  pixels: number[];
}

export interface StatusPayload {
  scenario: string;
  iterations: number;
  timestep: number;
  pending: number;
}

export interface MetricsRow {
  timestep: number;
  accuracy: number;
  net_trust_score: number;
  [key: string]: unknown;
}

export type SubmitResult =
  | { kind: "ok" }
  | { kind: "conflict"; message: string }
  | { kind: "rejected"; message: string };

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async pollTasks(): Promise<TaskPayload[]> {
    const res = await this.fetchFn(this.url("/api/tasks"));
    if (!res.ok) throw new Error(`GET /api/tasks -> ${res.status}`);
    return (await res.json()) as TaskPayload[];
  }

  async status(): Promise<StatusPayload> {
    const res = await this.fetchFn(this.url("/api/status"));
    if (!res.ok) throw new Error(`GET /api/status -> ${res.status}`);
    return (await res.json()) as StatusPayload;
  }

  async metrics(): Promise<MetricsRow[]> {
    const res = await this.fetchFn(this.url("/api/metrics"));
    if (!res.ok) throw new Error(`GET /api/metrics -> ${res.status}`);
    return (await res.json()) as MetricsRow[];
  }

  /** POST exactly the chosen label; server decides ok/conflict/reject. */
  async submitLabel(taskId: number, label: number): Promise<SubmitResult> {
    const res = await this.fetchFn(this.url(`/api/tasks/${taskId}/label`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label }),
    });
    if (res.ok) return { kind: "ok" };
    let message = `HTTP ${res.status}`;
    try {
      const body = (await res.json()) as { error?: string };
      if (body.error) message = body.error;
    } catch {
      /* non-JSON error body; keep the status text */
    }
    if (res.status === 409) return { kind: "conflict", message };
    return { kind: "rejected", message };
  }
}
