// Browser entry point: wire the app to the page once the DOM is ready.
import { PortalApi } from "./api.js";
import { createApp } from "./main.js";

function boot() {
  void createApp(new PortalApi("")).init();
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
