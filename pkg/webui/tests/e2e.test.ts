// End-to-end against a live portal: generate a synthetic raster, serve it,
// then drive the real UI code with real fetch calls. Skipped automatically
// when the python package is not importable on this machine.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, mkdirSync, renameSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { PortalApi } from "../src/api.js";
import { createApp } from "../src/main.js";

function pythonAvailable(): boolean {
  try {
    execFileSync("python3", ["-c", "import agrimon"], { stdio: "ignore" });
    return true;
  } catch {
    return false;
  }
}

const available = pythonAvailable();
const port = 18000 + Math.floor(Math.random() * 2000);
const base = `http://127.0.0.1:${port}`;
let server: ChildProcess | null = null;

async function waitForHealth(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${base}/api/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("portal did not come up");
}

describe.skipIf(!available)("live portal end to end", () => {
  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "agrimon-e2e-"));
    const gen = join(dir, "gen");
    const data = join(dir, "data");
    execFileSync("python3", ["-m", "agrimon.cli", "gen-synthetic",
      "--rows", "6", "--cols", "6", "--days", "60", "--revisit", "8",
      "--seed", "2", "--out", gen], { stdio: "ignore" });
    mkdirSync(join(data, "rasters"), { recursive: true });
    renameSync(join(gen, "raster.agr1"), join(data, "rasters", "field1.agr1"));
    execFileSync("python3", ["-m", "agrimon.cli", "ingest",
      "--data-dir", data, "--file", join(gen, "weather.csv")],
      { stdio: "ignore" });
    server = spawn("python3", ["-m", "agrimon.cli", "serve",
      "--data-dir", data, "--port", String(port)], { stdio: "ignore" });
    await waitForHealth();
  }, 60000);

  afterAll(() => {
    server?.kill();
  });

  it("renders, selects 3x3, submits, reaches DONE, shows the sow_day map",
    async () => {
      document.body.innerHTML = `
        <span id="status"></span>
        <select id="raster-picker"></select>
        <input id="band-slider" type="range" min="0" max="0" value="0" />
        <span id="band-label"></span>
        <div id="raster-view"></div>
        <span id="region-text"></span>
        <select id="strategy"><option value="pixel" selected>pixel</option></select>
        <input id="pop-size" value="12" /><input id="generations" value="8" />
        <input id="seed" value="3" /><input id="station" value="SYN1" />
        <input id="priority" value="0" /><input id="submitted-by" value="e2e" />
        <button id="submit-job"></button><div id="form-error"></div>
        <div id="job-cards"></div>
        <input id="search-box" /><button id="search-go"></button>
        <div id="search-results"></div>`;

      const submissions: Array<{ region: unknown }> = [];
      const realFetch = globalThis.fetch;
      vi.stubGlobal("fetch", (url: string | URL | Request, init?: RequestInit) => {
        if (String(url).endsWith("/api/jobs") && init?.method === "POST") {
          submissions.push(JSON.parse(String(init.body)));
        }
        return realFetch(url, init);
      });

      const app = createApp(new PortalApi(base));
      await app.init();
      expect(document.querySelectorAll("#raster-view .heatmap-cell"))
        .toHaveLength(36);

      const cell = (r: number, c: number) => document.querySelector(
        `#raster-view [data-row="${r}"][data-col="${c}"]`)!;
      cell(1, 1).dispatchEvent(new MouseEvent("mousedown", { bubbles: true }));
      cell(3, 3).dispatchEvent(new MouseEvent("mouseover", { bubbles: true }));
      cell(3, 3).dispatchEvent(new MouseEvent("mouseup", { bubbles: true }));
      const selection = { row0: 1, col0: 1, row1: 3, col1: 3 };
      expect(app.state.region).toEqual(selection);

      await app.submit();
      expect(document.getElementById("form-error")?.textContent).toBe("");
      expect(submissions).toHaveLength(1);
      expect(submissions[0].region).toEqual(selection);

      const card = app.state.cards[0];
      await vi.waitFor(() => {
        const state = card.element.querySelector(".job-state")?.textContent;
        expect(state).toBe("DONE");
      }, { timeout: 90000, interval: 500 });
      expect(card.element.querySelector(".job-progress-text")?.textContent)
        .toBe("9/9 pixels");

      await card.showParam("sow_day");
      const cells = card.element.querySelectorAll(".job-result-map .heatmap-cell");
      expect(cells).toHaveLength(9);
      const values = [...cells].map(
        (c) => Number((c as HTMLElement).dataset.value));
      expect(values.every((v) => Number.isFinite(v))).toBe(true);
      card.stop();
    }, 120000);
});
