// Payload shapes of the portal API (the server is the source of truth).

export interface RasterInfo {
  id: string;
  rows: number;
  cols: number;
  bands: number;
  nodata: number;
}

export interface BandResponse {
  id: string;
  band: number;
  rows: number;
  cols: number;
  nodata: number;
  values: number[][];
}

export interface Region {
  row0: number;
  col0: number;
  row1: number;
  col1: number;
}

export interface GaSettings {
  pop_size: number;
  generations: number;
  seed: number;
}

export interface JobSubmission {
  raster_id: string;
  region: Region;
  strategy: { kind: string; chunk?: number; groups?: number | null };
  ga: GaSettings;
  weather_station: string;
  priority: number;
  submitted_by: string;
}

export type JobState = "QUEUED" | "RUNNING" | "DONE" | "FAILED";

export interface JobStatus {
  id: string;
  state: JobState;
  progress: { done: number; total: number };
  priority: number;
  raster_id: string;
  region: Region;
  strategy: string;
  error: string | null;
}

export interface ResultPixel {
  row: number;
  col: number;
  rmse: number;
  genome: Record<string, number>;
  generations_run: number;
  evaluations: number;
}

export interface JobResult {
  job_id?: string;
  region: Region;
  seed: number;
  pixels: ResultPixel[];
}

export interface MetadataHit {
  title: string;
  description: string;
  keywords: string[];
  source_uri: string;
  ingested_at: string;
}

export const RESULT_PARAMS = ["sow_day", "wmax_mm", "growth_rate", "rmse"] as const;
export type ResultParam = (typeof RESULT_PARAMS)[number];
