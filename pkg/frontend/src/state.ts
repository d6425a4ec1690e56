/** Console state machine: one analyst session, three gated phases, a budget
 * gauge that refreshes after every mutation, and a two-group question
 * composer. One request in flight at a time. */

import { ApiClient, ServiceError } from "./api";
import {
  BudgetJson,
  GroupValue,
  Phase3Params,
  QueryJson,
  ReleaseJson,
  SimpleQuestionJson,
  TableJson,
  VerdictJson,
} from "./types";

export type Phase = 1 | 2 | 3;

export interface ConsoleState {
  sessionId: string | null;
  phase: Phase;
  budget: BudgetJson | null;
  release: ReleaseJson | null;
  verdict: VerdictJson | null;
  table: TableJson | null;
  selectedGroups: GroupValue[];
  busy: boolean;
  lastError: string | null;
}

export class GatingError extends Error {}

export class ConsoleController {
  readonly state: ConsoleState = {
    sessionId: null,
    phase: 1,
    budget: null,
    release: null,
    verdict: null,
    table: null,
    selectedGroups: [],
    busy: false,
    lastError: null,
  };

  private listeners: Array<(state: ConsoleState) => void> = [];

  constructor(private api: ApiClient) {}

  onChange(listener: (state: ConsoleState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  /** Run a mutation with the busy latch and a budget refresh afterwards. */
  private async mutate<T>(work: () => Promise<T>): Promise<T> {
    if (this.state.busy) {
      throw new GatingError("a request is already in flight");
    }
    this.state.busy = true;
    this.state.lastError = null;
    this.emit();
    try {
      const result = await work();
      if (this.state.sessionId) {
        this.state.budget = await this.api.budget(this.state.sessionId);
      }
      return result;
    } catch (error) {
      if (error instanceof ServiceError) {
        // including server-side 409 phase-order rejections
        this.state.lastError = `${error.code}: ${error.message}`;
        if (this.state.sessionId) {
          this.state.budget = await this.api.budget(this.state.sessionId);
        }
      }
      throw error;
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  async openSession(datasetId: string, totalRho: number, seed?: number): Promise<void> {
    await this.mutate(async () => {
      const info = await this.api.createSession(datasetId, totalRho, seed);
      this.state.sessionId = info.session_id;
      this.state.phase = 1;
      this.state.release = null;
      this.state.verdict = null;
      this.state.table = null;
      this.state.selectedGroups = [];
    });
  }

  async runQuery(query: QueryJson, rhoQuery: number): Promise<ReleaseJson> {
    if (!this.state.sessionId) throw new GatingError("open a session first");
    return this.mutate(async () => {
      const release = await this.api.phase1(this.state.sessionId!, query, rhoQuery);
      this.state.release = release;
      // a fresh release discards any verdict/table about the old one
      this.state.verdict = null;
      this.state.table = null;
      this.state.selectedGroups = [];
      this.state.phase = 2;
      return release;
    });
  }

  /** Click a release row. Re-clicking deselects; at most two distinct groups. */
  toggleGroup(group: GroupValue): void {
    const selected = this.state.selectedGroups;
    const index = selected.indexOf(group);
    if (index >= 0) {
      selected.splice(index, 1);
    } else if (selected.length < 2) {
      selected.push(group);
    }
    this.emit();
  }

  /** The composed "why is the first group larger?" question, if exactly two
   * distinct rows are selected. Never compares a group with itself. */
  composedQuestion(): SimpleQuestionJson | null {
    const [a, b] = this.state.selectedGroups;
    if (a === undefined || b === undefined || a === b) return null;
    return { kind: "simple", group_i: a, group_j: b };
  }

  async askQuestion(gamma: number): Promise<VerdictJson> {
    if (!this.state.release) {
      throw new GatingError("run a query before asking a question");
    }
    const question = this.composedQuestion();
    if (!question) {
      throw new GatingError("select two distinct groups to compose a question");
    }
    return this.mutate(async () => {
      const verdict = await this.api.phase2(this.state.sessionId!, question, gamma);
      this.state.verdict = verdict;
      this.state.phase = 3;
      return verdict;
    });
  }

  /** Phase-3 controls stay disabled until a phase-2 verdict exists. */
  explanationEnabled(): boolean {
    return this.state.verdict !== null;
  }

  /** A possibly-noise verdict demands a warning before spending more budget. */
  needsNoiseWarning(): boolean {
    return this.state.verdict?.verdict === "possibly-noise";
  }

  phase3Cost(params: Phase3Params): number {
    return params.rho_topk + params.rho_influ + params.rho_rank;
  }

  canAffordPhase3(params: Phase3Params): boolean {
    const budget = this.state.budget;
    if (!budget) return false;
    return this.phase3Cost(params) <= budget.remaining + 1e-12;
  }

  async requestExplanation(params: Phase3Params): Promise<TableJson> {
    if (!this.explanationEnabled()) {
      throw new GatingError("phase 3 requires a phase-2 verdict");
    }
    if (!this.canAffordPhase3(params)) {
      throw new GatingError("phase-3 cost exceeds the remaining budget");
    }
    return this.mutate(async () => {
      const table = await this.api.phase3(this.state.sessionId!, params);
      this.state.table = table;
      return table;
    });
  }
}
