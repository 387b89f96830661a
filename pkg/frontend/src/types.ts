// JSON shapes of the workflow service. The UI never invents fields: every
// type here mirrors a service response one-to-one.

export type Stage = 1 | 2 | 3;
export type SessionStage = Stage | "completed";

export interface Metrics {
  road_density: number;
  land_use: number[];
  height_coverage: number[];
  open_space: number;
}

export interface ComplianceSnapshot {
  groups: Record<string, { mae: number; rmse: number }>;
}

export interface StageView {
  targets: Metrics | null;
  prompt: string | null;
  alternatives: string[];
  seeds: number[];
  compliance: (ComplianceSnapshot | null)[];
  infeasible: boolean[];
  selected: number | null;
  revision: string | null;
  forwarded: string | null;
}

export interface SessionView {
  id: string;
  city: string;
  constraint_ref: string;
  image_size: number;
  backend: Record<string, unknown>;
  stage: SessionStage;
  stages: Record<string, StageView>;
  last_seq: number;
}

export interface PaletteEntry {
  name: string;
  id: number;
  rgb: [number, number, number];
  role: string;
}

export interface PaletteDoc {
  version: number;
  min_distance: number;
  classes: PaletteEntry[];
}

export interface ApiError {
  error: { code: string; message: string };
}

export class ServiceError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}
