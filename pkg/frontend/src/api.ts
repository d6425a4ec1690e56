/** Typed client for the dpxplain service. Only the documented endpoints exist
 * here; the console never asks the server for anything else. */

import {
  BudgetJson,
  Phase3Params,
  QueryJson,
  ReleaseJson,
  SimpleQuestionJson,
  TableJson,
  VerdictJson,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface SessionInfo {
  session_id: string;
  dataset_id: string;
  total_rho: number;
  seed: number;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ServiceError(
        response.status,
        payload?.code ?? "error",
        payload?.message ?? `request failed with ${response.status}`,
      );
    }
    return payload as T;
  }

  createDataset(csv: string, schemaSidecar: unknown): Promise<{ dataset_id: string; row_count: number }> {
    return this.request("POST", "/datasets", { csv, schema_sidecar: schemaSidecar });
  }

  createSession(datasetId: string, totalRho: number, seed?: number): Promise<SessionInfo> {
    return this.request("POST", "/sessions", {
      dataset_id: datasetId,
      total_rho: totalRho,
      ...(seed === undefined ? {} : { seed }),
    });
  }

  phase1(sessionId: string, query: QueryJson, rhoQuery: number): Promise<ReleaseJson> {
    return this.request("POST", `/sessions/${sessionId}/phase1`, {
      query,
      rho_query: rhoQuery,
    });
  }

  phase2(sessionId: string, question: SimpleQuestionJson, gamma: number): Promise<VerdictJson> {
    return this.request("POST", `/sessions/${sessionId}/phase2`, { question, gamma });
  }

  phase3(sessionId: string, params: Phase3Params): Promise<TableJson> {
    return this.request("POST", `/sessions/${sessionId}/phase3`, params);
  }

  budget(sessionId: string): Promise<BudgetJson> {
    return this.request("GET", `/sessions/${sessionId}/budget`);
  }
}
