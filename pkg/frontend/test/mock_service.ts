/** An in-memory stand-in for the dpxplain service with the same JSON
 * contract, phase gating and budget accounting, plus a request log for
 * network-layer audits. */

import { FetchLike } from "../src/api";
import {
  BudgetJson,
  ChargeJson,
  ReleaseJson,
  TableJson,
  VerdictJson,
} from "../src/types";

export interface LoggedRequest {
  method: string;
  path: string;
  body: unknown;
}

export interface MockOptions {
  totalRho?: number;
  release?: ReleaseJson;
  verdict?: VerdictJson;
  table?: TableJson;
}

export const SAMPLE_RELEASE: ReleaseJson = {
  query: { agg: "AVG", group_by: "marital_status", agg_attr: "high_income" },
  rho_query: 0.1,
  results: [
    { group: "Never-married", value: 0.045511, sum_component: 485.2, count_component: 10662.1, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Separated", value: 0.064712, sum_component: 99.1, count_component: 1531.5, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Widowed", value: 0.082854, sum_component: 126.3, count_component: 1524.4, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Married-spouse-absent", value: 0.089988, sum_component: 56.7, count_component: 630.1, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Divorced", value: 0.101578, sum_component: 674.9, count_component: 6644.2, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Married-AF-spouse", value: 0.463193, sum_component: 17.2, count_component: 37.1, sigma_sum: 4.47, sigma_count: 4.47 },
    { group: "Married-civ-spouse", value: 0.446021, sum_component: 9996.4, count_component: 22412.5, sigma_sum: 4.47, sigma_count: 4.47 },
  ],
};

export const SUPPORTED_VERDICT: VerdictJson = {
  interval: { lower: 0.399, upper: 0.402, level: 0.95, trivial: false },
  verdict: "supported",
};

export const SAMPLE_TABLE: TableJson = {
  level: 0.95,
  relative: true,
  rows: [
    { predicate: [{ attr: "occupation", op: "=", value: "Exec-managerial" }], rel_influ_ci: { lower: 0.0325, upper: 0.1012 }, rank_ci: { lower: 1, upper: 9 } },
    { predicate: [{ attr: "education", op: "=", value: "Bachelors" }], rel_influ_ci: { lower: 0.0293, upper: 0.098 }, rank_ci: { lower: 1, upper: 8 } },
    { predicate: [{ attr: "age", op: "=", value: "(40, 50]" }], rel_influ_ci: { lower: 0.0276, upper: 0.0963 }, rank_ci: { lower: 1, upper: 8 } },
    { predicate: [{ attr: "occupation", op: "=", value: "Prof-specialty" }], rel_influ_ci: { lower: 0.0094, upper: 0.0781 }, rank_ci: { lower: 1, upper: 18 } },
    { predicate: [{ attr: "relationship", op: "=", value: "Own-child" }], rel_influ_ci: { lower: -0.0049, upper: 0.0638 }, rank_ci: { lower: 1, upper: 96 } },
  ],
};

export class MockService {
  requests: LoggedRequest[] = [];
  private charges: ChargeJson[] = [];
  private hasRelease = false;
  private hasVerdict = false;
  private totalRho: number;
  private release: ReleaseJson;
  private verdict: VerdictJson;
  private table: TableJson;

  constructor(options: MockOptions = {}) {
    this.totalRho = options.totalRho ?? 2.1;
    this.release = options.release ?? SAMPLE_RELEASE;
    this.verdict = options.verdict ?? SUPPORTED_VERDICT;
    this.table = options.table ?? SAMPLE_TABLE;
  }

  private spent(): number {
    return this.charges.reduce((acc, c) => acc + c.rho, 0);
  }

  private budget(): BudgetJson {
    const spent = this.spent();
    return {
      total: this.totalRho,
      spent,
      remaining: this.totalRho - spent,
      charges: [...this.charges],
    };
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ method, path, body });
    const reply = (status: number, payload: unknown) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    const fail = (status: number, code: string, message: string) =>
      reply(status, { code, message, detail: {} });

    if (method === "POST" && path === "/datasets") {
      return reply(200, { dataset_id: "ds-1", row_count: 48842 });
    }
    if (method === "POST" && path === "/sessions") {
      return reply(200, {
        session_id: "sess-1",
        dataset_id: body.dataset_id,
        total_rho: body.total_rho,
        seed: body.seed ?? 0,
      });
    }
    if (method === "GET" && path === "/sessions/sess-1/budget") {
      return reply(200, this.budget());
    }
    if (method === "POST" && path === "/sessions/sess-1/phase1") {
      if (body.rho_query <= 0) return fail(400, "bad_request", "rho_query must be positive");
      if (this.spent() + body.rho_query > this.totalRho + 1e-12) {
        return fail(402, "insufficient_budget", "charge exceeds remaining budget");
      }
      this.charges.push({ label: "query", rho: body.rho_query });
      this.hasRelease = true;
      this.hasVerdict = false;
      return reply(200, this.release);
    }
    if (method === "POST" && path === "/sessions/sess-1/phase2") {
      if (!this.hasRelease) return fail(409, "phase_order", "phase 2 requires a phase-1 release");
      this.hasVerdict = true;
      return reply(200, this.verdict);
    }
    if (method === "POST" && path === "/sessions/sess-1/phase3") {
      if (!this.hasVerdict) return fail(409, "phase_order", "phase 3 requires a phase-2 verdict");
      const cost = body.rho_topk + body.rho_influ + body.rho_rank;
      if (this.spent() + cost > this.totalRho + 1e-12) {
        return fail(402, "insufficient_budget", "charges exceed remaining budget");
      }
      this.charges.push({ label: "topk", rho: body.rho_topk });
      this.charges.push({ label: "influ", rho: body.rho_influ });
      this.charges.push({ label: "rank", rho: body.rho_rank });
      return reply(200, this.table);
    }
    return fail(404, "not_found", `no such endpoint ${method} ${path}`);
  };
}
