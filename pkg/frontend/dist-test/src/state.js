// Client-side session controller: one method per workflow API call, state is
// always the last server-confirmed view (refresh reconstructs the identical
// view from GET /sessions/{id}).
import { toBase64 } from "./api.js";
export class SessionController {
    api;
    state = null;
    listeners = [];
    constructor(api) {
        this.api = api;
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    commit(view) {
        this.state = view;
        for (const listener of this.listeners)
            listener(view);
        return view;
    }
    get id() {
        if (!this.state)
            throw new Error("no session loaded");
        return this.state.id;
    }
    currentStageView() {
        if (!this.state || this.state.stage === "completed")
            return null;
        return this.state.stages[String(this.state.stage)];
    }
    async createFromDemo(city, seed, size = 512, backend) {
        const png = await this.api.demoConstraint(seed, size);
        return this.create(city, png, backend);
    }
    async create(city, constraintPng, backend) {
        return this.commit(await this.api.createSession(city, toBase64(constraintPng), backend));
    }
    async load(id) {
        return this.commit(await this.api.getSession(id));
    }
    async refresh() {
        return this.load(this.id);
    }
    async setTargets(stage, metrics) {
        return this.commit(await this.api.setTargets(this.id, stage, metrics));
    }
    async generate(n, seed) {
        return this.commit(await this.api.requestAlternatives(this.id, n, seed));
    }
    async select(index) {
        return this.commit(await this.api.selectAlternative(this.id, index));
    }
    async uploadRevision(png) {
        return this.commit(await this.api.uploadRevision(this.id, png));
    }
    async advance() {
        return this.commit(await this.api.advance(this.id));
    }
    /** Mirrors the server precondition: a stage advances only when it has a
     * selection or a revision. The advance button binds to this. */
    canAdvance() {
        const view = this.currentStageView();
        if (!view)
            return false;
        return view.revision !== null || view.selected !== null;
    }
    /** Per-alternative compliance badges of the current stage:
     * [{group: mae}] per alternative, empty for stage 3. */
    badges() {
        const view = this.currentStageView();
        if (!view)
            return [];
        return view.compliance.map((snap) => {
            const out = {};
            if (snap) {
                for (const [group, score] of Object.entries(snap.groups)) {
                    out[group] = score.mae;
                }
            }
            return out;
        });
    }
}
