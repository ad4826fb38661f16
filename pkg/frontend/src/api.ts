// Typed client for the correlation service HTTP API. All paths are
// relative so the bundle works when served from /ui on the same host.

export interface ProvenanceNote {
  layer: string;
  detail: string;
}

export interface FeedbackEntry {
  group_id: string;
  verdict: "up" | "down";
  author: string;
  ts: number;
  flags?: Record<string, boolean> | null;
}

export interface GroupSummary {
  group_id: string;
  alert_ids: string[];
  provenance: ProvenanceNote[];
  entities: string[];
  interval: [number, number];
  size: number;
  severities: string[];
  feedback: FeedbackEntry[];
}

export interface AlertView {
  event: {
    id: string;
    title: string;
    description: string;
    created_at: number;
    severity: string;
    source: string;
  };
  entities: unknown[];
}

export interface GroupDetail extends GroupSummary {
  alerts: AlertView[];
}

export interface Localization {
  group_id: string;
  roots: string[];
  blast_radius: string[];
  explanations: Record<string, string>;
}

export interface RunStatus {
  run_id: string;
  status: "pending" | "done";
}

export interface GroupFilters {
  severity?: string;
  entity?: string;
  since?: number;
  until?: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

function query(filters: GroupFilters): string {
  const params = new URLSearchParams();
  for (const [k, v] of Object.entries(filters)) {
    if (v !== undefined && v !== "") params.set(k, String(v));
  }
  const s = params.toString();
  return s ? `?${s}` : "";
}

export class ApiClient {
  constructor(private base = "", private token = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = { ...(init?.headers as any) };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const res = await fetch(this.base + path, { ...init, headers });
    if (!res.ok) {
      let detail = res.statusText;
      try {
        detail = (await res.json()).detail ?? detail;
      } catch {
        // body was not JSON; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return res.json() as Promise<T>;
  }

  getGroups(filters: GroupFilters = {}): Promise<GroupSummary[]> {
    return this.request(`/api/groups${query(filters)}`);
  }

  getGroup(groupId: string): Promise<GroupDetail> {
    return this.request(`/api/groups/${encodeURIComponent(groupId)}`);
  }

  getLocalization(groupId: string): Promise<Localization> {
    return this.request(
      `/api/groups/${encodeURIComponent(groupId)}/localization`);
  }

  getAlert(alertId: string): Promise<AlertView> {
    return this.request(`/api/alerts/${encodeURIComponent(alertId)}`);
  }

  postFeedback(groupId: string, verdict: "up" | "down", author: string,
               flags?: Record<string, boolean>): Promise<{ id: string }> {
    const body: Record<string, unknown> = {
      group_id: groupId, verdict, author, ts: Date.now(),
    };
    if (flags && Object.keys(flags).length) body.flags = flags;
    return this.request("/api/feedback", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  recorrelate(): Promise<RunStatus> {
    return this.request("/api/recorrelate", { method: "POST" });
  }

  getRun(runId: string): Promise<RunStatus> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}`);
  }

  /** Poll a run until it leaves "pending" (or attempts run out). */
  async waitForRun(runId: string, intervalMs = 1000,
                   maxAttempts = 60): Promise<RunStatus> {
    let status: RunStatus = { run_id: runId, status: "pending" };
    for (let i = 0; i < maxAttempts; i++) {
      status = await this.getRun(runId);
      if (status.status !== "pending") return status;
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
    return status;
  }
}
