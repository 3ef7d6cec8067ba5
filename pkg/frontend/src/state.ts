// Console view state: the latest service snapshot plus display-only
// selections. Mutations happen exclusively by storing fresh service
// responses, so the view can never drift from the server.

import type { RecommendationWire, SessionSnapshot, SurfacesResponse } from "./api.js";

export interface ConsoleState {
  snapshot: SessionSnapshot | null;
  recommendation: RecommendationWire | null;
  recommendationAbsent: boolean;
  surfaces: SurfacesResponse | null;
  surfaceQuantity: "cost" | "temperature" | "roughness";
  surfaceGridN: number;
  pMinTemperature: number;
  pMinRoughness: number;
  formError: string;
  busy: boolean;
}

export function initialState(): ConsoleState {
  return {
    snapshot: null,
    recommendation: null,
    recommendationAbsent: false,
    surfaces: null,
    surfaceQuantity: "cost",
    surfaceGridN: 61,
    pMinTemperature: 0.5,
    pMinRoughness: 0.5,
    formError: "",
    busy: false,
  };
}

type Listener = (state: ConsoleState) => void;

export class Store {
  private state: ConsoleState = initialState();
  private listeners: Listener[] = [];

  get(): ConsoleState {
    return this.state;
  }

  update(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }
}

export function currentProposal(state: ConsoleState) {
  const snapshot = state.snapshot;
  if (!snapshot || snapshot.pending_proposals.length === 0) return null;
  return snapshot.pending_proposals[0];
}

export function isConverged(state: ConsoleState): boolean {
  const history = state.snapshot?.convergence_history ?? [];
  return history.length > 0 && history[history.length - 1].converged;
}

export function atTrialCap(state: ConsoleState): boolean {
  const snapshot = state.snapshot;
  if (!snapshot) return false;
  return snapshot.trials.length >= snapshot.config.max_trials;
}
