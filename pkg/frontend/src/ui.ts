// DOM layer. Every mutation calls one workflow endpoint through the
// controller and re-renders from the server-confirmed view.

import { ApiClient } from "./api.js";
import { nearestPaletteEntry, paintCircle } from "./brush.js";
import {
  HEIGHT_LABELS,
  LAND_USE_LABELS,
  defaultStage1Form,
  defaultStage2Form,
  renormalize,
  stage1Metrics,
  stage2Metrics,
  validatePercentGroup,
  validateRoadDensity,
} from "./forms.js";
import { SessionController } from "./state.js";
import { Metrics, PaletteDoc, Stage } from "./types.js";

const STAGE_TITLES: Record<string, string> = {
  "1": "Stage 1: road network and land use",
  "2": "Stage 2: building layout",
  "3": "Stage 3: detailed rendering",
  completed: "Completed",
};

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, attrs: Record<string, string> = {},
    ...children: (Node | string)[]): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export class StudioApp {
  private controller: SessionController;
  private palette: PaletteDoc | null = null;
  private stage1Form = defaultStage1Form();
  private stage2Form = defaultStage2Form();
  private previewTimer: number | undefined;
  private busy = false;

  constructor(private root: HTMLElement, private api: ApiClient) {
    this.controller = new SessionController(api);
    this.controller.onChange(() => this.render());
  }

  async start(): Promise<void> {
    this.palette = await this.api.palette();
    const params = new URLSearchParams(location.search);
    const existing = params.get("session");
    if (existing) {
      await this.controller.load(existing);
    }
    this.render();
  }

  private async run(action: () => Promise<unknown>): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.render();
    try {
      await action();
    } catch (err) {
      alert(err instanceof Error ? err.message : String(err));
    } finally {
      this.busy = false;
      this.render();
    }
  }

  private render(): void {
    this.root.replaceChildren();
    const state = this.controller.state;
    if (!state) {
      this.root.append(this.renderStart());
      return;
    }
    this.root.append(this.renderHeader(), this.renderStagePanel());
  }

  private renderStart(): HTMLElement {
    const cityInput = el("input", { value: "New York", id: "city" });
    const seedInput = el("input", { value: "0", type: "number" });
    const button = el("button", {}, "Start demo session");
    button.onclick = () => this.run(async () => {
      await this.controller.createFromDemo(cityInput.value,
                                           Number(seedInput.value));
      history.replaceState(null, "",
                           `?session=${this.controller.state!.id}`);
    });
    return el("section", { class: "start" },
              el("h1", {}, "urbanstudio"),
              el("p", {}, "Stepwise urban design with a human in the loop."),
              el("label", {}, "City ", cityInput),
              el("label", {}, "Demo site seed ", seedInput),
              button);
  }

  private renderHeader(): HTMLElement {
    const state = this.controller.state!;
    const steps = ["1", "2", "3", "completed"].map((key) => {
      const active = String(state.stage) === key;
      return el("span", { class: active ? "step active" : "step" },
                STAGE_TITLES[key]);
    });
    return el("header", {},
              el("div", { class: "stageline" }, ...steps),
              el("div", { class: "meta" },
                 `session ${state.id.slice(0, 8)} · ${state.city} · backend ` +
                 `${JSON.stringify(state.backend)}`));
  }

  private renderStagePanel(): HTMLElement {
    const state = this.controller.state!;
    if (state.stage === "completed") {
      return this.renderCompleted();
    }
    const stage = state.stage as Stage;
    const panel = el("section", { class: "panel" });
    panel.append(this.renderConstraintPreview(stage));
    if (stage === 1 || stage === 2) {
      panel.append(this.renderTargetForm(stage));
    } else {
      panel.append(el("p", {}, "Stage 3 renders the satellite-style image; " +
                               "no metric targets required."));
    }
    panel.append(this.renderGenerateControls(), this.renderGallery());
    return panel;
  }

  private renderConstraintPreview(stage: Stage): HTMLElement {
    const state = this.controller.state!;
    let ref = state.constraint_ref;
    if (stage === 2) ref = state.stages["1"].forwarded ?? ref;
    if (stage === 3) ref = state.stages["2"].forwarded ?? ref;
    return el("figure", { class: "constraint" },
              el("img", { src: this.api.imageUrl(state.id, ref), width: "256" }),
              el("figcaption", {}, "conditioning image"));
  }

  private schedulePreview(stage: Stage, metrics: Metrics,
                          target: HTMLElement): void {
    window.clearTimeout(this.previewTimer);
    this.previewTimer = window.setTimeout(async () => {
      try {
        target.textContent = await this.api.promptPreview(
          stage, this.controller.state!.city, metrics);
      } catch (err) {
        target.textContent = err instanceof Error ? err.message : String(err);
      }
    }, 150);
  }

  private renderTargetForm(stage: Stage): HTMLElement {
    const preview = el("pre", { class: "prompt" },
                       this.controller.currentStageView()?.prompt ?? "");
    const form = el("div", { class: "targets" });
    const sliders: HTMLInputElement[] = [];

    const labels = stage === 1 ? LAND_USE_LABELS : HEIGHT_LABELS;
    const values = () => stage === 1 ? this.stage1Form.landUse : this.stage2Form;

    labels.forEach((label, index) => {
      const input = el("input", {
        type: "range", min: "0", max: "100", step: "0.1",
        value: String(values()[index]),
      });
      const readout = el("span", { class: "readout" },
                         `${values()[index].toFixed(1)}%`);
      input.oninput = () => {
        // Sliders auto-renormalize so each group always totals 100%.
        const next = renormalize(values(), index, Number(input.value));
        if (stage === 1) this.stage1Form.landUse = next;
        else this.stage2Form = next;
        sliders.forEach((s, i) => {
          s.value = String(next[i]);
          (s.nextElementSibling as HTMLElement).textContent =
            `${next[i].toFixed(1)}%`;
        });
        this.schedulePreview(stage, this.formMetrics(stage), preview);
      };
      sliders.push(input);
      form.append(el("label", { class: "slider" }, `${label} `, input, readout));
    });

    let roadInput: HTMLInputElement | null = null;
    if (stage === 1) {
      roadInput = el("input", {
        type: "number", min: "0", max: "100", step: "0.1",
        value: String(this.stage1Form.road),
      });
      roadInput.oninput = () => {
        const value = Number(roadInput!.value);
        const check = validateRoadDensity(value);
        roadInput!.setCustomValidity(check.ok ? "" : check.message!);
        if (check.ok) {
          this.stage1Form.road = value;
          this.schedulePreview(stage, this.formMetrics(stage), preview);
        }
      };
      form.append(el("label", { class: "slider" }, "Road density % ", roadInput));
    }

    const apply = el("button", {}, "Set targets");
    apply.onclick = () => this.run(async () => {
      const group = stage === 1 ? this.stage1Form.landUse : this.stage2Form;
      const check = validatePercentGroup(group);
      if (!check.ok) throw new Error(check.message);
      await this.controller.setTargets(stage, this.formMetrics(stage));
    });

    this.schedulePreview(stage, this.formMetrics(stage), preview);
    return el("section", { class: "form" },
              el("h2", {}, "Targets"), form, apply,
              el("h3", {}, "Prompt preview (service-rendered)"), preview);
  }

  private formMetrics(stage: Stage): Metrics {
    return stage === 1
      ? stage1Metrics(this.stage1Form.landUse, this.stage1Form.road)
      : stage2Metrics(this.stage2Form);
  }

  private renderGenerateControls(): HTMLElement {
    const state = this.controller.state!;
    const stageView = this.controller.currentStageView()!;
    const nInput = el("input", { type: "number", min: "1", max: "16",
                                 value: "6" });
    const seedInput = el("input", { type: "number", value: "0" });
    const generate = el("button", {}, this.busy ? "Generating…" : "Generate");
    generate.disabled = this.busy ||
      (state.stage !== 3 && stageView.targets === null);
    generate.onclick = () => this.run(() => this.controller.generate(
      Number(nInput.value), Number(seedInput.value)));

    const advance = el("button", {}, "Advance to next stage");
    advance.disabled = !this.controller.canAdvance() || this.busy;
    advance.onclick = () => this.run(() => this.controller.advance());

    const revise = el("input", { type: "file", accept: "image/png" });
    revise.onchange = () => {
      const file = revise.files?.[0];
      if (!file) return;
      void this.run(async () => {
        const bytes = new Uint8Array(await file.arrayBuffer());
        await this.controller.uploadRevision(bytes);
      });
    };

    return el("section", { class: "controls" },
              el("label", {}, "Alternatives ", nInput),
              el("label", {}, "Seed ", seedInput),
              generate, advance,
              el("label", { class: "revise" }, "Upload revision ", revise));
  }

  private renderGallery(): HTMLElement {
    const state = this.controller.state!;
    const stageView = this.controller.currentStageView();
    if (!stageView || stageView.alternatives.length === 0) {
      return el("p", { class: "empty" }, "No alternatives yet.");
    }
    const badges = this.controller.badges();
    const gallery = el("div", { class: "gallery" });
    stageView.alternatives.forEach((ref, index) => {
      const img = el("img", { src: this.api.imageUrl(state.id, ref),
                              width: "220" });
      const badgeText = Object.entries(badges[index] ?? {})
        .map(([group, mae]) => `${group} Δ${(mae * 100).toFixed(1)}%`)
        .join(" · ");
      const select = el("button", {},
                        stageView.selected === index ? "Selected" : "Select");
      select.disabled = this.busy;
      select.onclick = () => this.run(() => this.controller.select(index));
      const card = el("div", {
        class: stageView.selected === index ? "card selected" : "card",
      }, img, el("div", { class: "badges" }, badgeText || "–"),
         this.renderBrushButton(ref), select);
      if (stageView.infeasible[index]) {
        card.append(el("div", { class: "warn" }, "targets infeasible"));
      }
      gallery.append(card);
    });
    return gallery;
  }

  private renderBrushButton(ref: string): HTMLElement {
    const button = el("button", { class: "small" }, "Edit with brush");
    button.onclick = () => void this.openBrush(ref);
    return button;
  }

  /** In-browser palette brush: paint on a copy, upload as the revision. */
  private async openBrush(ref: string): Promise<void> {
    if (!this.palette) return;
    const state = this.controller.state!;
    const dialog = el("dialog", { class: "brush" });
    const canvas = el("canvas");
    const image = new Image();
    image.src = this.api.imageUrl(state.id, ref);
    await image.decode();
    canvas.width = image.naturalWidth;
    canvas.height = image.naturalHeight;
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(image, 0, 0);

    let current = this.palette.classes[0];
    const swatches = el("div", { class: "swatches" });
    for (const entry of this.palette.classes) {
      const swatch = el("button", {
        class: "swatch", title: entry.name,
        style: `background: rgb(${entry.rgb.join(",")})`,
      });
      swatch.onclick = () => { current = entry; };
      swatches.append(swatch);
    }

    let painting = false;
    const radius = el("input", { type: "range", min: "1", max: "24",
                                 value: "6" });
    const paint = (event: MouseEvent) => {
      if (!painting) return;
      const rect = canvas.getBoundingClientRect();
      const x = (event.clientX - rect.left) * (canvas.width / rect.width);
      const y = (event.clientY - rect.top) * (canvas.height / rect.height);
      const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
      const snapped = nearestPaletteEntry(
        { r: current.rgb[0], g: current.rgb[1], b: current.rgb[2] },
        this.palette!.classes);
      paintCircle(data.data, canvas.width, canvas.height, x, y,
                  Number(radius.value),
                  { r: snapped.rgb[0], g: snapped.rgb[1], b: snapped.rgb[2] });
      ctx.putImageData(data, 0, 0);
    };
    canvas.onmousedown = (e) => { painting = true; paint(e); };
    canvas.onmousemove = paint;
    canvas.onmouseup = () => { painting = false; };

    const save = el("button", {}, "Upload as revision");
    save.onclick = () => void this.run(async () => {
      const blob: Blob = await new Promise((resolve) =>
        canvas.toBlob((b) => resolve(b!), "image/png"));
      await this.controller.uploadRevision(
        new Uint8Array(await blob.arrayBuffer()));
      dialog.close();
      dialog.remove();
    });
    const cancel = el("button", {}, "Cancel");
    cancel.onclick = () => { dialog.close(); dialog.remove(); };

    dialog.append(swatches, el("label", {}, "Brush size ", radius),
                  canvas, el("div", {}, save, cancel));
    document.body.append(dialog);
    dialog.showModal();
  }

  private renderCompleted(): HTMLElement {
    const state = this.controller.state!;
    const row = el("div", { class: "gallery" });
    for (const stage of ["1", "2", "3"]) {
      const ref = state.stages[stage].forwarded;
      if (ref) {
        row.append(el("figure", {},
                      el("img", { src: this.api.imageUrl(state.id, ref),
                                  width: "220" }),
                      el("figcaption", {}, STAGE_TITLES[stage])));
      }
    }
    return el("section", { class: "panel" },
              el("h2", {}, "Design complete"), row);
  }
}
