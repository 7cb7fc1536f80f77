import { PortalApi } from "./api.js";
import { renderHeatmap, type HeatmapData } from "./heatmap.js";
import { Poller } from "./poll.js";
import { regionWithin } from "./selection.js";
import {
  RESULT_PARAMS, type JobResult, type JobStatus, type JobSubmission,
  type Region, type ResultParam,
} from "./types.js";

export interface JobFormValues {
  rasterId: string;
  region: Region | null;
  strategy: string;
  popSize: number;
  generations: number;
  seed: number;
  station: string;
  priority: number;
  submittedBy: string;
}

/** Turn form values into the exact submission payload. Returns an error
 * string instead when the form is not submittable; no request may be sent in
 * that case. The region in the payload is the selection object as-is. */
export function buildJobPayload(
  form: JobFormValues,
  rasterDims: { rows: number; cols: number },
): JobSubmission | { error: string } {
  if (!form.rasterId) return { error: "select a raster first" };
  if (!form.region) return { error: "drag a region on the raster first" };
  if (!regionWithin(form.region, rasterDims.rows, rasterDims.cols)) {
    return { error: "selection is outside the raster" };
  }
  if (!(form.popSize >= 2)) return { error: "population must be >= 2" };
  if (!(form.generations >= 0)) return { error: "generations must be >= 0" };
  if (!(form.priority >= -10 && form.priority <= 10)) {
    return { error: "priority must be in [-10, 10]" };
  }
  if (!form.station) return { error: "weather station is required" };
  return {
    raster_id: form.rasterId,
    region: form.region,
    strategy: { kind: form.strategy },
    ga: { pop_size: form.popSize, generations: form.generations, seed: form.seed },
    weather_station: form.station,
    priority: form.priority,
    submitted_by: form.submittedBy,
  };
}

/** Grid of one recovered parameter over the job region, for the heatmap. */
export function resultParamGrid(result: JobResult, param: ResultParam): HeatmapData {
  const { region } = result;
  const rows = region.row1 - region.row0 + 1;
  const cols = region.col1 - region.col0 + 1;
  const nodata = -9999;
  const values = Array.from({ length: rows }, () => new Array<number>(cols).fill(nodata));
  for (const pixel of result.pixels) {
    const value = param === "rmse" ? pixel.rmse : pixel.genome[param];
    values[pixel.row - region.row0][pixel.col - region.col0] = value;
  }
  return { rows, cols, values, nodata };
}

/** One submitted job: status line, progress bar, and on DONE a parameter
 * picker that renders result heatmaps. Polls until terminal state. */
export class JobCard {
  readonly element: HTMLElement;
  private poller: Poller<JobStatus>;
  private result: JobResult | null = null;

  constructor(
    private api: PortalApi,
    readonly jobId: string,
    intervalMs = 1000,
  ) {
    this.element = document.createElement("div");
    this.element.className = "job-card";
    this.element.innerHTML = `
      <div class="job-head">
        <strong class="job-id"></strong>
        <span class="job-state"></span>
      </div>
      <progress max="1" value="0"></progress>
      <span class="job-progress-text"></span>
      <div class="job-error"></div>
      <div class="job-params"></div>
      <div class="job-result-map"></div>`;
    this.query(".job-id").textContent = jobId;
    this.poller = new Poller(
      () => this.api.jobStatus(this.jobId),
      (status) => this.render(status),
      (status) => status.state === "DONE" || status.state === "FAILED",
      intervalMs,
      (err) => {
        this.query(".job-error").textContent = `poll failed: ${String(err)}`;
      },
    );
    this.poller.start();
  }

  private query(selector: string): HTMLElement {
    return this.element.querySelector(selector) as HTMLElement;
  }

  render(status: JobStatus): void {
    this.query(".job-state").textContent = status.state;
    this.query(".job-state").dataset.state = status.state;
    const { done, total } = status.progress;
    const bar = this.element.querySelector("progress") as HTMLProgressElement;
    bar.value = total > 0 ? done / total : 0;
    this.query(".job-progress-text").textContent = `${done}/${total} pixels`;
    if (status.state === "FAILED") {
      this.query(".job-error").textContent = status.error ?? "job failed";
    }
    if (status.state === "DONE" && !this.query(".job-params").hasChildNodes()) {
      this.offerParams();
    }
  }

  private offerParams(): void {
    const host = this.query(".job-params");
    for (const param of RESULT_PARAMS) {
      const button = document.createElement("button");
      button.textContent = param;
      button.dataset.param = param;
      button.addEventListener("click", () => void this.showParam(param));
      host.appendChild(button);
    }
  }

  async showParam(param: ResultParam): Promise<void> {
    this.result = this.result ?? await this.api.jobResult(this.jobId);
    renderHeatmap(this.query(".job-result-map"), resultParamGrid(this.result, param));
    this.query(".job-result-map").dataset.param = param;
  }

  stop(): void {
    this.poller.stop();
  }
}
