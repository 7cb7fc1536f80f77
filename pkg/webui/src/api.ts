import type {
  BandResponse, JobResult, JobStatus, JobSubmission, MetadataHit, RasterInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const message = (body as { error?: string }).error ?? response.statusText;
    throw new ApiError(response.status, message);
  }
  return body as T;
}

/** Thin typed client over the portal endpoints; every UI number comes
 * through here. */
export class PortalApi {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  listRasters(): Promise<RasterInfo[]> {
    return fetch(this.url("/api/rasters")).then((r) => asJson<RasterInfo[]>(r));
  }

  getBand(rasterId: string, band: number): Promise<BandResponse> {
    return fetch(this.url(`/api/rasters/${encodeURIComponent(rasterId)}/band/${band}`))
      .then((r) => asJson<BandResponse>(r));
  }

  submitJob(spec: JobSubmission): Promise<{ id: string }> {
    return fetch(this.url("/api/jobs"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    }).then((r) => asJson<{ id: string }>(r));
  }

  jobStatus(id: string): Promise<JobStatus> {
    return fetch(this.url(`/api/jobs/${encodeURIComponent(id)}`))
      .then((r) => asJson<JobStatus>(r));
  }

  jobResult(id: string): Promise<JobResult> {
    return fetch(this.url(`/api/jobs/${encodeURIComponent(id)}/result`))
      .then((r) => asJson<JobResult>(r));
  }

  searchMetadata(keyword: string): Promise<MetadataHit[]> {
    return fetch(this.url(`/api/metadata/search?q=${encodeURIComponent(keyword)}`))
      .then((r) => asJson<MetadataHit[]>(r));
  }

  health(): Promise<{ status: string }> {
    return fetch(this.url("/api/health")).then((r) => asJson<{ status: string }>(r));
  }
}
