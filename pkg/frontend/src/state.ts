// Client-side session controller: one method per workflow API call, state is
// always the last server-confirmed view (refresh reconstructs the identical
// view from GET /sessions/{id}).

import { ApiClient, toBase64 } from "./api.js";
import { Metrics, SessionView, Stage, StageView } from "./types.js";

export type Listener = (state: SessionView | null) => void;

export class SessionController {
  state: SessionView | null = null;
  private listeners: Listener[] = [];

  constructor(readonly api: ApiClient) {}

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private commit(view: SessionView): SessionView {
    this.state = view;
    for (const listener of this.listeners) listener(view);
    return view;
  }

  private get id(): string {
    if (!this.state) throw new Error("no session loaded");
    return this.state.id;
  }

  currentStageView(): StageView | null {
    if (!this.state || this.state.stage === "completed") return null;
    return this.state.stages[String(this.state.stage)];
  }

  async createFromDemo(city: string, seed: number, size = 512,
                       backend?: Record<string, unknown>): Promise<SessionView> {
    const png = await this.api.demoConstraint(seed, size);
    return this.create(city, png, backend);
  }

  async create(city: string, constraintPng: Uint8Array,
               backend?: Record<string, unknown>): Promise<SessionView> {
    return this.commit(await this.api.createSession(
      city, toBase64(constraintPng), backend));
  }

  async load(id: string): Promise<SessionView> {
    return this.commit(await this.api.getSession(id));
  }

  async refresh(): Promise<SessionView> {
    return this.load(this.id);
  }

  async setTargets(stage: Stage, metrics: Metrics | null): Promise<SessionView> {
    return this.commit(await this.api.setTargets(this.id, stage, metrics));
  }

  async generate(n: number, seed: number): Promise<SessionView> {
    return this.commit(await this.api.requestAlternatives(this.id, n, seed));
  }

  async select(index: number): Promise<SessionView> {
    return this.commit(await this.api.selectAlternative(this.id, index));
  }

  async uploadRevision(png: Uint8Array): Promise<SessionView> {
    return this.commit(await this.api.uploadRevision(this.id, png));
  }

  async advance(): Promise<SessionView> {
    return this.commit(await this.api.advance(this.id));
  }

  /** Mirrors the server precondition: a stage advances only when it has a
   * selection or a revision. The advance button binds to this. */
  canAdvance(): boolean {
    const view = this.currentStageView();
    if (!view) return false;
    return view.revision !== null || view.selected !== null;
  }

  /** Per-alternative compliance badges of the current stage:
   * [{group: mae}] per alternative, empty for stage 3. */
  badges(): Record<string, number>[] {
    const view = this.currentStageView();
    if (!view) return [];
    return view.compliance.map((snap) => {
      const out: Record<string, number> = {};
      if (snap) {
        for (const [group, score] of Object.entries(snap.groups)) {
          out[group] = score.mae;
        }
      }
      return out;
    });
  }
}
