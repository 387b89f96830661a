import { ApiClient } from "./api.js";
import { StudioApp } from "./ui.js";
const root = document.getElementById("app");
if (root) {
    // Same-origin by default: the workflow service mounts this UI under /ui.
    const api = new ApiClient("");
    void new StudioApp(root, api).start();
}
