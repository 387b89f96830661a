// Thin typed client over the workflow HTTP API.

import {
  ApiError,
  Metrics,
  PaletteDoc,
  ServiceError,
  SessionView,
  Stage,
} from "./types.js";

async function raise(resp: Response): Promise<never> {
  let code = "unknown";
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as ApiError;
    if (body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    // non-JSON error body; keep the status message
  }
  throw new ServiceError(resp.status, code, message);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(city: string, constraintPngB64: string,
                backend?: Record<string, unknown>): Promise<SessionView> {
    const payload: Record<string, unknown> = {
      city,
      constraint_png_b64: constraintPngB64,
    };
    if (backend) payload.backend = backend;
    return this.post<SessionView>("/sessions", payload);
  }

  getSession(id: string): Promise<SessionView> {
    return this.json<SessionView>(`/sessions/${id}`);
  }

  setTargets(id: string, stage: Stage, metrics: Metrics | null): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/targets`, { stage, metrics });
  }

  requestAlternatives(id: string, n: number, seed: number): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/alternatives`, { n, seed });
  }

  selectAlternative(id: string, index: number): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/select`, { index });
  }

  advance(id: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/advance`, {});
  }

  async uploadRevision(id: string, png: Uint8Array): Promise<SessionView> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}/revision`, {
      method: "POST",
      headers: { "content-type": "image/png" },
      body: png as unknown as BodyInit,
    });
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as SessionView;
  }

  // The service is the single source of truth for prompt text: the UI only
  // previews what generation will use, it never builds prompt strings itself.
  async promptPreview(stage: Stage | "combined", city: string,
                      metrics: Metrics | null): Promise<string> {
    const body = await this.post<{ prompt: string }>("/prompt/preview",
                                                     { stage, city, metrics });
    return body.prompt;
  }

  palette(): Promise<PaletteDoc> {
    return this.json<PaletteDoc>("/palette");
  }

  imageUrl(id: string, ref: string): string {
    return `${this.baseUrl}/sessions/${id}/images/${ref}`;
  }

  async imageBytes(id: string, ref: string): Promise<Uint8Array> {
    const resp = await fetch(this.imageUrl(id, ref));
    if (!resp.ok) await raise(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async demoConstraint(seed: number, size: number): Promise<Uint8Array> {
    const resp = await fetch(
      `${this.baseUrl}/demo/constraint?seed=${seed}&size=${size}`);
    if (!resp.ok) await raise(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(`${this.baseUrl}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }
}

export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
