import { ApiClient } from "./client.js";
import { createApp } from "./app.js";

const base = new URLSearchParams(window.location.search).get("api") ??
  window.location.origin;
const root = document.getElementById("app");
if (root) createApp(root, new ApiClient(base));
