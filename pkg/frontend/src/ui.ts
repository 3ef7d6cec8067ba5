// Console UI: static skeleton mounted once, dynamic regions re-rendered
// from the latest service snapshot on every state change.

import { ApiError, ConsoleApi, type OutcomeWire } from "./api.js";
import { fmtCost, fmtHalfwidth, fmtParams, fmtProbability, validateOutcomeField, validateProbability } from "./format.js";
import { Store, atTrialCap, currentProposal, isConverged } from "./state.js";
import { renderHeatmap } from "./heatmap.js";

const SKELETON = `
<section id="wizard">
  <h2>New session</h2>
  <form id="wizard-form">
    <label>Seed <input id="wizard-seed" name="seed" type="number" value="0" min="0"></label>
    <label>Convergence limit (U) <input id="wizard-epsilon" name="epsilon" type="number" value="0.04" step="0.005" min="0.001"></label>
    <label>Trial cap <input id="wizard-max-trials" name="max_trials" type="number" value="30" min="2"></label>
    <button id="wizard-submit" type="submit">Create session</button>
  </form>
  <div id="wizard-error" class="error" role="alert"></div>
</section>
<section id="session" hidden>
  <h2>Session <span id="session-id"></span> <span id="badge" class="badge"></span></h2>
  <div id="proposal-panel">
    <h3>Next trial</h3>
    <div id="proposal">no proposal</div>
  </div>
  <form id="trial-form">
    <h3>Enter measurements</h3>
    <label>First-side temperature (degC) <input id="trial-temp" name="temp" type="number" step="0.1" required></label>
    <label>Max roughness (nm) <input id="trial-roughness" name="roughness" type="number" step="0.1" required></label>
    <label>Dressing interval (inserts) <input id="trial-interval" name="interval" type="number" step="0.5" required></label>
    <label>Censored at cap <input id="trial-censored" name="censored" type="checkbox"></label>
    <button id="trial-submit" type="submit">Record trial</button>
    <div id="form-error" class="error" role="alert"></div>
  </form>
  <div id="trials-panel">
    <h3>Trials</h3>
    <table id="trial-table">
      <thead><tr><th>#</th><th>Parameters</th><th>T (degC)</th><th>Ra (nm)</th><th>Interval</th><th>Cost</th></tr></thead>
      <tbody id="trial-rows"></tbody>
    </table>
  </div>
  <div id="recommendation-panel">
    <h3>Recommendation</h3>
    <label>p_min temperature <input id="pmin-t" type="range" min="0.01" max="0.999" step="0.001" value="0.5">
      <span id="pmin-t-value">0.500</span></label>
    <label>p_min roughness <input id="pmin-ra" type="range" min="0.01" max="0.999" step="0.001" value="0.5">
      <span id="pmin-ra-value">0.500</span></label>
    <div id="recommendation">no recommendation yet</div>
  </div>
  <div id="timeline-panel">
    <h3>Convergence (2-sigma cost at optimum per iteration)</h3>
    <ol id="timeline"></ol>
  </div>
  <div id="heatmap-panel">
    <h3>Predicted surfaces</h3>
    <label>Quantity
      <select id="surface-quantity">
        <option value="cost">cost</option>
        <option value="temperature">temperature</option>
        <option value="roughness">roughness</option>
      </select>
    </label>
    <label>Statistic
      <select id="surface-statistic">
        <option value="mean">mean</option>
        <option value="ci_halfwidth">CI halfwidth</option>
      </select>
    </label>
    <button id="surface-refresh" type="button">Refresh heatmap</button>
    <div id="heatmap"></div>
  </div>
</section>
`;

function element<T extends HTMLElement>(root: ParentNode, id: string): T {
  const found = root.querySelector(`#${id}`);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

export class Console {
  readonly store = new Store();
  private sessionId: string | null = null;
  private pendingToken: string | null = null;
  private tokenCounter = 0;

  constructor(
    private root: HTMLElement,
    private api: ConsoleApi,
  ) {}

  mount(): void {
    this.root.innerHTML = SKELETON;
    this.store.subscribe(() => this.render());

    element<HTMLFormElement>(this.root, "wizard-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.createSession();
    });
    element<HTMLFormElement>(this.root, "trial-form").addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitTrial();
    });
    for (const id of ["pmin-t", "pmin-ra"]) {
      element<HTMLInputElement>(this.root, id).addEventListener("change", () => {
        void this.refreshRecommendation();
      });
    }
    element<HTMLButtonElement>(this.root, "surface-refresh").addEventListener("click", () => {
      void this.refreshSurfaces();
    });
    element<HTMLSelectElement>(this.root, "surface-quantity").addEventListener("change", () => {
      void this.refreshSurfaces();
    });
  }

  private newTrialToken(): string {
    this.tokenCounter += 1;
    const rand = Math.random().toString(36).slice(2, 10);
    return `console-${Date.now()}-${this.tokenCounter}-${rand}`;
  }

  async createSession(): Promise<void> {
    const errorBox = element<HTMLDivElement>(this.root, "wizard-error");
    errorBox.textContent = "";
    try {
      const seed = Number(element<HTMLInputElement>(this.root, "wizard-seed").value);
      const epsilon = Number(element<HTMLInputElement>(this.root, "wizard-epsilon").value);
      const maxTrials = Number(element<HTMLInputElement>(this.root, "wizard-max-trials").value);
      const created = await this.api.createSession({
        seed,
        epsilon_U: epsilon,
        max_trials: maxTrials,
      });
      this.sessionId = created.session_id;
      element<HTMLElement>(this.root, "wizard").hidden = true;
      element<HTMLElement>(this.root, "session").hidden = false;
      element<HTMLElement>(this.root, "session-id").textContent = created.session_id;
      await this.refresh();
    } catch (error) {
      errorBox.textContent = error instanceof Error ? error.message : String(error);
    }
  }

  /** Attach the console to an existing session (used by tests and reloads). */
  async attach(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    element<HTMLElement>(this.root, "wizard").hidden = true;
    element<HTMLElement>(this.root, "session").hidden = false;
    element<HTMLElement>(this.root, "session-id").textContent = sessionId;
    await this.refresh();
  }

  /** Pull the authoritative snapshot; every mutation ends here. */
  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const snapshot = await this.api.getSession(this.sessionId);
    this.store.update({ snapshot });
    if (snapshot.trials.length >= 2) {
      await this.refreshRecommendation();
    }
  }

  async refreshRecommendation(): Promise<void> {
    if (!this.sessionId) return;
    const state = this.store.get();
    try {
      const pT = validateProbability(element<HTMLInputElement>(this.root, "pmin-t").value);
      const pRa = validateProbability(element<HTMLInputElement>(this.root, "pmin-ra").value);
      this.store.update({ pMinTemperature: pT, pMinRoughness: pRa });
      if (!state.snapshot || state.snapshot.trials.length < 2) return;
      const recommendation = await this.api.getRecommendation(this.sessionId, pT, pRa);
      this.store.update({ recommendation, recommendationAbsent: recommendation === null });
    } catch (error) {
      this.store.update({ formError: error instanceof Error ? error.message : String(error) });
    }
  }

  async refreshSurfaces(): Promise<void> {
    if (!this.sessionId) return;
    const quantity = element<HTMLSelectElement>(this.root, "surface-quantity").value as
      | "cost"
      | "temperature"
      | "roughness";
    const state = this.store.get();
    const surfaces = await this.api.getSurfaces(this.sessionId, quantity, state.surfaceGridN);
    this.store.update({ surfaces, surfaceQuantity: quantity });
  }

  async submitTrial(): Promise<void> {
    if (!this.sessionId) return;
    const state = this.store.get();
    const proposal = currentProposal(state);
    const errorBox = element<HTMLDivElement>(this.root, "form-error");
    errorBox.textContent = "";
    if (!proposal) {
      errorBox.textContent = "no pending proposal to run";
      return;
    }
    let outcome: OutcomeWire;
    try {
      outcome = {
        first_side_temp_C: validateOutcomeField(
          "temperature",
          element<HTMLInputElement>(this.root, "trial-temp").value,
        ),
        max_roughness_nm: validateOutcomeField(
          "roughness",
          element<HTMLInputElement>(this.root, "trial-roughness").value,
        ),
        dressing_interval_inserts: validateOutcomeField(
          "dressing interval",
          element<HTMLInputElement>(this.root, "trial-interval").value,
        ),
        censored: element<HTMLInputElement>(this.root, "trial-censored").checked,
      };
    } catch (error) {
      errorBox.textContent = error instanceof Error ? error.message : String(error);
      return;
    }

    // one token per logical submission: a retry after a network failure
    // reuses it, so the service replays rather than duplicates
    if (this.pendingToken === null) this.pendingToken = this.newTrialToken();
    this.store.update({ busy: true });
    try {
      await this.api.postTrial(
        this.sessionId,
        { cutting_speed_mps: proposal.cutting_speed_mps, feed_rate_mmpm: proposal.feed_rate_mmpm },
        outcome,
        this.pendingToken,
      );
      this.pendingToken = null;
      await this.refresh();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // converged or capped while we were typing: resync and disable
        this.pendingToken = null;
        await this.refresh();
      }
      errorBox.textContent = error instanceof Error ? error.message : String(error);
    } finally {
      this.store.update({ busy: false });
    }
  }

  private render(): void {
    const state = this.store.get();
    const snapshot = state.snapshot;
    if (!snapshot) return;

    const badge = element<HTMLElement>(this.root, "badge");
    const converged = isConverged(state);
    const capped = atTrialCap(state);
    badge.textContent = converged ? "converged" : capped ? "trial cap reached" : "running";
    badge.dataset.state = converged ? "converged" : capped ? "capped" : "running";

    const proposal = currentProposal(state);
    element<HTMLElement>(this.root, "proposal").textContent = proposal
      ? `${fmtParams(proposal.cutting_speed_mps, proposal.feed_rate_mmpm)} [${proposal.origin}]`
      : converged
        ? "session converged; no further trials"
        : "no proposal";

    const formDisabled = converged || capped || state.busy || proposal === null;
    element<HTMLButtonElement>(this.root, "trial-submit").disabled = formDisabled;
    element<HTMLDivElement>(this.root, "form-error").textContent = state.formError
      ? state.formError
      : element<HTMLDivElement>(this.root, "form-error").textContent;

    const rows = element<HTMLTableSectionElement>(this.root, "trial-rows");
    rows.innerHTML = "";
    for (const trial of snapshot.trials) {
      const tr = document.createElement("tr");
      tr.innerHTML =
        `<td>${trial.index}</td>` +
        `<td>${fmtParams(trial.cutting_speed_mps, trial.feed_rate_mmpm)}</td>` +
        `<td>${trial.first_side_temp_C.toFixed(1)}</td>` +
        `<td>${trial.max_roughness_nm.toFixed(1)}</td>` +
        `<td>${trial.dressing_interval_inserts.toFixed(1)}${trial.censored ? " (censored)" : ""}</td>` +
        `<td class="cost-cell">${fmtCost(trial.cost_U)}</td>`;
      rows.appendChild(tr);
    }

    element<HTMLElement>(this.root, "pmin-t-value").textContent =
      state.pMinTemperature.toFixed(3);
    element<HTMLElement>(this.root, "pmin-ra-value").textContent =
      state.pMinRoughness.toFixed(3);

    const recBox = element<HTMLElement>(this.root, "recommendation");
    if (state.recommendation) {
      const rec = state.recommendation;
      recBox.innerHTML =
        `<span id="rec-params">${fmtParams(rec.cutting_speed_mps, rec.feed_rate_mmpm)}</span> ` +
        `<span id="rec-cost">${fmtCost(rec.expected_cost_U)}</span> ` +
        `&plusmn; <span id="rec-halfwidth">${fmtHalfwidth(rec.cost_ci_halfwidth_U)}</span> ` +
        `<span id="rec-feasibility">pT ${fmtProbability(rec.feasibility.temperature)}, ` +
        `pRa ${fmtProbability(rec.feasibility.roughness)}</span>`;
    } else if (state.recommendationAbsent) {
      recBox.textContent = "no feasible region at these thresholds";
    } else {
      recBox.textContent = "no recommendation yet";
    }

    const timeline = element<HTMLOListElement>(this.root, "timeline");
    timeline.innerHTML = "";
    snapshot.convergence_history.forEach((status, i) => {
      const li = document.createElement("li");
      li.textContent = `${fmtHalfwidth(status.criterion_value_U)} (hits ${status.consecutive_hits})`;
      li.dataset.iteration = String(i);
      li.dataset.converged = String(status.converged);
      timeline.appendChild(li);
    });

    if (state.surfaces) {
      const statistic = element<HTMLSelectElement>(this.root, "surface-statistic").value as
        | "mean"
        | "ci_halfwidth";
      renderHeatmap(element<HTMLDivElement>(this.root, "heatmap"), state.surfaces, statistic);
    }
  }
}
