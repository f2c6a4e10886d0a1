import { mountApp } from "./app.js";

// Entry point for the served bundle. Mounted under /ui by the API server,
// so relative fetch paths hit the same origin; `?session=<id>` in the URL
// resumes an existing session (that is what a mid-batch refresh becomes).

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = mountApp(root, { baseUrl: "" });

const sid = new URLSearchParams(window.location.search).get("session");
if (sid) void app.attach(sid);
