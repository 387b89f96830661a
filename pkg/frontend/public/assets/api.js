// Thin typed client over the workflow HTTP API.
import { ServiceError, } from "./types.js";
async function raise(resp) {
    let code = "unknown";
    let message = `HTTP ${resp.status}`;
    try {
        const body = (await resp.json());
        if (body.error) {
            code = body.error.code;
            message = body.error.message;
        }
    }
    catch {
        // non-JSON error body; keep the status message
    }
    throw new ServiceError(resp.status, code, message);
}
export class ApiClient {
    baseUrl;
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    async json(path, init) {
        const resp = await fetch(this.baseUrl + path, init);
        if (!resp.ok)
            await raise(resp);
        return (await resp.json());
    }
    post(path, body) {
        return this.json(path, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }
    createSession(city, constraintPngB64, backend) {
        const payload = {
            city,
            constraint_png_b64: constraintPngB64,
        };
        if (backend)
            payload.backend = backend;
        return this.post("/sessions", payload);
    }
    getSession(id) {
        return this.json(`/sessions/${id}`);
    }
    setTargets(id, stage, metrics) {
        return this.post(`/sessions/${id}/targets`, { stage, metrics });
    }
    requestAlternatives(id, n, seed) {
        return this.post(`/sessions/${id}/alternatives`, { n, seed });
    }
    selectAlternative(id, index) {
        return this.post(`/sessions/${id}/select`, { index });
    }
    advance(id) {
        return this.post(`/sessions/${id}/advance`, {});
    }
    async uploadRevision(id, png) {
        const resp = await fetch(`${this.baseUrl}/sessions/${id}/revision`, {
            method: "POST",
            headers: { "content-type": "image/png" },
            body: png,
        });
        if (!resp.ok)
            await raise(resp);
        return (await resp.json());
    }
    // The service is the single source of truth for prompt text: the UI only
    // previews what generation will use, it never builds prompt strings itself.
    async promptPreview(stage, city, metrics) {
        const body = await this.post("/prompt/preview", { stage, city, metrics });
        return body.prompt;
    }
    palette() {
        return this.json("/palette");
    }
    imageUrl(id, ref) {
        return `${this.baseUrl}/sessions/${id}/images/${ref}`;
    }
    async imageBytes(id, ref) {
        const resp = await fetch(this.imageUrl(id, ref));
        if (!resp.ok)
            await raise(resp);
        return new Uint8Array(await resp.arrayBuffer());
    }
    async demoConstraint(seed, size) {
        const resp = await fetch(`${this.baseUrl}/demo/constraint?seed=${seed}&size=${size}`);
        if (!resp.ok)
            await raise(resp);
        return new Uint8Array(await resp.arrayBuffer());
    }
    async health() {
        try {
            const resp = await fetch(`${this.baseUrl}/healthz`);
            return resp.ok;
        }
        catch {
            return false;
        }
    }
}
export function toBase64(bytes) {
    let binary = "";
    const chunk = 0x8000;
    for (let i = 0; i < bytes.length; i += chunk) {
        binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
    }
    return btoa(binary);
}
