/**
 * Typed client for the curation service HTTP API.
 *
 * The fetch implementation is injected so tests can intercept every request;
 * the UI never computes property or statistics values itself - all numbers
 * displayed come verbatim from these responses.
 */

export interface InstanceCard {
  global_id: string;
  tile_id: string;
  group_label: string;
  area_px: number;
  perimeter_px: number;
  radius_px: number;
  non_smoothness: number | null;
  non_circularity: number;
  excluded: boolean;
  reason: string;
  thumbnail_url: string;
}

export interface InstancePage {
  page: number;
  page_size: number;
  total: number;
  items: InstanceCard[];
}

export interface StatsSummary {
  group: string;
  property: string;
  n: number;
  mean: number | null;
  sd: number | null;
  median: number | null;
  q1: number | null;
  q3: number | null;
}

export interface StatsTTest {
  a: string;
  b: string;
  property: string;
  t: number;
  df: number;
  p: number;
  significant: boolean;
}

export interface StatsDoc {
  alpha: number;
  summaries: StatsSummary[];
  ttests: StatsTTest[];
}

export interface ExclusionEntry {
  global_id: string;
  excluded: boolean;
  reason: string;
  timestamp: number;
}

export interface ExportResult {
  csv: string;
  exclusions: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(detail, resp.status);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
    private readonly base: string = "",
  ) {}

  listInstances(group: string | null, page: number, pageSize: number): Promise<InstancePage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (group) params.set("group", group);
    return this.fetchImpl(`${this.base}/api/instances?${params}`).then((r) =>
      asJson<InstancePage>(r),
    );
  }

  setExclusion(globalId: string, excluded: boolean, reason: string): Promise<ExclusionEntry> {
    return this.fetchImpl(
      `${this.base}/api/instances/${encodeURIComponent(globalId)}/exclusion`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ excluded, reason }),
      },
    ).then((r) => asJson<ExclusionEntry>(r));
  }

  getStats(): Promise<StatsDoc> {
    return this.fetchImpl(`${this.base}/api/stats`).then((r) => asJson<StatsDoc>(r));
  }

  exportRun(): Promise<ExportResult> {
    return this.fetchImpl(`${this.base}/api/export`, { method: "POST" }).then((r) =>
      asJson<ExportResult>(r),
    );
  }
}
