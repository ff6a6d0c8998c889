/**
 * Typed client for the correspondence service.
 *
 * The UI never computes geometry itself: matrices, residuals, and preview
 * boxes always come verbatim from these responses.
 */

export interface PairSummary {
  pair_id: string;
  source_image: string;
  target_image: string;
  target_width: number;
  target_height: number;
  point_count: number;
  revision: number;
  fitted: boolean;
}

export interface PointPair {
  sx: number;
  sy: number;
  tx: number;
  ty: number;
}

export interface PointsResponse {
  pair_id: string;
  points: PointPair[];
  revision: number;
}

export interface FitResponse {
  matrix: number[][] | null;
  rmse: number | null;
  max_error: number | null;
  per_point: number[] | null;
  reason: string | null;
  revision: number;
}

/** Mutation responses bundle the updated points with the refreshed fit. */
export type MutationResponse = PointsResponse & FitResponse;

export interface PreviewBox {
  annotation_id: number;
  label: string;
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface PreviewResponse {
  pair_id: string;
  revision: number;
  boxes: PreviewBox[] | null;
  reason: string | null;
}

/** The service rejected a mutation because our revision is out of date. */
export class StaleRevisionError extends Error {
  constructor(readonly serverRevision: number) {
    super(`stale revision; server is at ${serverRevision}`);
  }
}

export interface ApiClient {
  listPairs(): Promise<PairSummary[]>;
  getPair(pairId: string): Promise<PairSummary>;
  getPoints(pairId: string): Promise<PointsResponse>;
  getHomography(pairId: string): Promise<FitResponse>;
  addPoint(pairId: string, point: PointPair, revision: number): Promise<MutationResponse>;
  deletePoint(pairId: string, index: number, revision: number): Promise<MutationResponse>;
  getPreview(pairId: string): Promise<PreviewResponse>;
  imageUrl(pairId: string, which: "source" | "target"): string;
}

async function asJson<T>(response: Response): Promise<T> {
  if (response.status === 409) {
    const body = await response.json().catch(() => null);
    const revision =
      body && body.detail && typeof body.detail.revision === "number"
        ? body.detail.revision
        : -1;
    throw new StaleRevisionError(revision);
  }
  if (!response.ok) {
    const text = await response.text().catch(() => "");
    throw new Error(`${response.status} ${response.statusText}: ${text}`);
  }
  return (await response.json()) as T;
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  listPairs(): Promise<PairSummary[]> {
    return fetch(this.url("/api/pairs")).then((r) => asJson<PairSummary[]>(r));
  }

  getPair(pairId: string): Promise<PairSummary> {
    return fetch(this.url(`/api/pairs/${pairId}`)).then((r) => asJson<PairSummary>(r));
  }

  getPoints(pairId: string): Promise<PointsResponse> {
    return fetch(this.url(`/api/pairs/${pairId}/correspondences`)).then((r) =>
      asJson<PointsResponse>(r),
    );
  }

  getHomography(pairId: string): Promise<FitResponse> {
    return fetch(this.url(`/api/pairs/${pairId}/homography`)).then((r) =>
      asJson<FitResponse>(r),
    );
  }

  addPoint(pairId: string, point: PointPair, revision: number): Promise<MutationResponse> {
    return fetch(this.url(`/api/pairs/${pairId}/correspondences`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...point, revision }),
    }).then((r) => asJson<MutationResponse>(r));
  }

  deletePoint(pairId: string, index: number, revision: number): Promise<MutationResponse> {
    return fetch(
      this.url(`/api/pairs/${pairId}/correspondences/${index}?revision=${revision}`),
      { method: "DELETE" },
    ).then((r) => asJson<MutationResponse>(r));
  }

  getPreview(pairId: string): Promise<PreviewResponse> {
    return fetch(this.url(`/api/pairs/${pairId}/preview`)).then((r) =>
      asJson<PreviewResponse>(r),
    );
  }

  imageUrl(pairId: string, which: "source" | "target"): string {
    return this.url(`/api/pairs/${pairId}/image/${which}`);
  }
}
