import { PortalApi } from "./api.js";
import { renderHeatmap } from "./heatmap.js";
import { JobCard, buildJobPayload, type JobFormValues } from "./jobs.js";
import { RegionSelector } from "./selection.js";
import type { RasterInfo, Region } from "./types.js";

const $ = (id: string) => document.getElementById(id) as HTMLElement;
const input = (id: string) => $(id) as HTMLInputElement;

interface AppState {
  rasters: RasterInfo[];
  raster: RasterInfo | null;
  band: number;
  region: Region | null;
  selector: RegionSelector | null;
  bandFetches: number;
  cards: JobCard[];
}

export function createApp(api: PortalApi, root: Document = document) {
  const state: AppState = {
    rasters: [], raster: null, band: 0, region: null, selector: null,
    bandFetches: 0, cards: [],
  };

  function setStatus(text: string) {
    $("status").textContent = text;
  }

  function regionText(region: Region | null): string {
    if (!region) return "none";
    return `rows ${region.row0}..${region.row1}, cols ${region.col0}..${region.col1}`;
  }

  async function showBand(): Promise<void> {
    const raster = state.raster;
    if (!raster) return;
    state.bandFetches += 1;
    const band = await api.getBand(raster.id, state.band);
    renderHeatmap($("raster-view"), {
      rows: band.rows, cols: band.cols, values: band.values, nodata: band.nodata,
    });
    $("band-label").textContent = `band ${state.band} / ${raster.bands - 1}`;
    const grid = $("raster-view").querySelector(".heatmap-grid") as HTMLElement;
    state.selector = new RegionSelector(grid, band.rows, band.cols, (region) => {
      state.region = region;
      $("region-text").textContent = regionText(region);
    });
    if (state.region) {
      state.region = null;
      $("region-text").textContent = regionText(null);
    }
  }

  async function selectRaster(id: string): Promise<void> {
    state.raster = state.rasters.find((r) => r.id === id) ?? null;
    state.band = 0;
    const slider = input("band-slider");
    slider.max = String((state.raster?.bands ?? 1) - 1);
    slider.value = "0";
    await showBand();
  }

  function formValues(): JobFormValues {
    return {
      rasterId: state.raster?.id ?? "",
      region: state.region,
      strategy: (input("strategy") as unknown as HTMLSelectElement).value,
      popSize: Number(input("pop-size").value),
      generations: Number(input("generations").value),
      seed: Number(input("seed").value),
      station: input("station").value.trim(),
      priority: Number(input("priority").value),
      submittedBy: input("submitted-by").value.trim(),
    };
  }

  async function submit(): Promise<void> {
    const raster = state.raster;
    $("form-error").textContent = "";
    if (!raster) {
      $("form-error").textContent = "select a raster first";
      return;
    }
    const payload = buildJobPayload(formValues(), raster);
    if ("error" in payload) {
      $("form-error").textContent = payload.error;
      return;
    }
    try {
      const { id } = await api.submitJob(payload);
      const card = new JobCard(api, id);
      state.cards.push(card);
      $("job-cards").prepend(card.element);
    } catch (err) {
      $("form-error").textContent = String(err);
    }
  }

  async function search(): Promise<void> {
    const hits = await api.searchMetadata(input("search-box").value.trim());
    const host = $("search-results");
    host.textContent = hits.length ? "" : "no matches";
    for (const hit of hits) {
      const item = document.createElement("div");
      item.className = "search-hit";
      item.textContent = `${hit.title} [${hit.keywords.join(", ")}]`;
      host.appendChild(item);
    }
  }

  async function init(): Promise<void> {
    setStatus("loading rasters…");
    state.rasters = await api.listRasters();
    const picker = $("raster-picker") as HTMLSelectElement & HTMLElement;
    picker.innerHTML = "";
    for (const raster of state.rasters) {
      const option = root.createElement("option");
      option.value = raster.id;
      option.textContent = `${raster.id} (${raster.rows}x${raster.cols}, ${raster.bands} bands)`;
      picker.appendChild(option);
    }
    picker.addEventListener("change", () => void selectRaster(picker.value));
    input("band-slider").addEventListener("input", () => {
      state.band = Number(input("band-slider").value);
      void showBand();
    });
    $("submit-job").addEventListener("click", () => void submit());
    $("search-go").addEventListener("click", () => void search());
    if (state.rasters.length > 0) {
      await selectRaster(state.rasters[0].id);
      setStatus("ready");
    } else {
      setStatus("no rasters registered on the server");
    }
  }

  return { state, init, submit, showBand, selectRaster, formValues };
}
