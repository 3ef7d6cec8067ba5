// Typed client for the optimization service. The console performs no
// GP or cost math of its own: every number it shows comes from here.

export interface ParamsWire {
  cutting_speed_mps: number;
  feed_rate_mmpm: number;
}

export interface ProposalWire extends ParamsWire {
  origin: string;
}

export interface OutcomeWire {
  first_side_temp_C: number;
  max_roughness_nm: number;
  dressing_interval_inserts: number;
  censored: boolean;
}

export interface TrialWire extends ParamsWire {
  index: number;
  first_side_temp_C: number;
  max_roughness_nm: number;
  dressing_interval_inserts: number;
  censored: boolean;
  cost_U: number;
  origin: string;
  out_of_domain: boolean;
}

export interface RecommendationWire extends ParamsWire {
  expected_cost_U: number;
  cost_ci_halfwidth_U: number;
  feasibility: Record<string, number>;
}

export interface ConvergenceWire {
  converged: boolean;
  criterion_value_U: number | null;
  consecutive_hits: number;
  recent_feed_span_mmpm: number | null;
  recent_speed_span_mps: number | null;
}

export interface SessionSnapshot {
  session_id: string;
  config: {
    seed: number;
    epsilon_U: number;
    max_trials: number;
    domain: { cutting_speed_mps: [number, number]; feed_rate_mmpm: [number, number] };
    constraints: { name: string; limit: number; p_min: number }[];
  };
  trials: TrialWire[];
  pending_proposals: ProposalWire[];
  proposal_history: ProposalWire[];
  recommendations: (RecommendationWire | null)[];
  convergence_history: ConvergenceWire[];
  degraded: boolean;
}

export interface TrialResponse {
  trial: TrialWire;
  recommendation: RecommendationWire | null;
  convergence: ConvergenceWire;
  next_proposal: ProposalWire | null;
  degraded: boolean;
}

export interface SurfacesResponse {
  quantity: string;
  n: number;
  columns: string[];
  rows: number[][];
}

export interface CreateSessionRequest {
  session_id?: string;
  seed?: number;
  epsilon_U?: number;
  max_trials?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = await response.json();
    detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ConsoleApi {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async createSession(
    body: CreateSessionRequest,
  ): Promise<{ session_id: string; initial_proposals: ProposalWire[] }> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(response);
    return response.json();
  }

  async getSession(sessionId: string): Promise<SessionSnapshot> {
    const response = await fetch(this.url(`/sessions/${sessionId}`));
    await raiseForStatus(response);
    return response.json();
  }

  async postTrial(
    sessionId: string,
    params: ParamsWire,
    outcome: OutcomeWire,
    trialToken: string,
  ): Promise<TrialResponse> {
    const response = await fetch(this.url(`/sessions/${sessionId}/trials`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ params, outcome, trial_token: trialToken }),
    });
    await raiseForStatus(response);
    return response.json();
  }

  async getRecommendation(
    sessionId: string,
    pT: number,
    pRa: number,
  ): Promise<RecommendationWire | null> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/recommendation?pT=${pT}&pRa=${pRa}`),
    );
    if (response.status === 204) return null;
    await raiseForStatus(response);
    return response.json();
  }

  async getSurfaces(
    sessionId: string,
    quantity: string,
    n: number,
  ): Promise<SurfacesResponse> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/surfaces?quantity=${quantity}&n=${n}`),
    );
    await raiseForStatus(response);
    return response.json();
  }
}
