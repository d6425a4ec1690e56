/** Wire types mirroring the service's JSON contract, verbatim. */

export type GroupValue = string | number;

export interface PredicateAtom {
  attr: string;
  op: string;
  value: GroupValue;
}

export interface QueryJson {
  agg: "COUNT" | "SUM" | "AVG";
  group_by: string;
  agg_attr?: string;
  where?: PredicateAtom[];
}

export interface NoisyGroupRow {
  group: GroupValue;
  value: number | null; // null when the AVG quotient is undefined
  sum_component?: number;
  count_component?: number;
  sigma?: number;
  sigma_sum?: number;
  sigma_count?: number;
}

export interface ReleaseJson {
  query: QueryJson;
  rho_query: number;
  results: NoisyGroupRow[];
}

export interface IntervalJson {
  lower: number | null; // null encodes an unbounded (trivial) endpoint
  upper: number | null;
  level: number;
  trivial: boolean;
}

export interface VerdictJson {
  interval: IntervalJson;
  verdict: "supported" | "possibly-noise";
}

export interface BoundsJson {
  lower: number;
  upper: number;
}

export interface TableRowJson {
  predicate: PredicateAtom[];
  rel_influ_ci: BoundsJson;
  rank_ci: BoundsJson;
}

export interface TableJson {
  rows: TableRowJson[];
  level: number;
  relative: boolean;
}

export interface ChargeJson {
  label: string;
  rho: number;
}

export interface BudgetJson {
  total: number;
  spent: number;
  remaining: number;
  charges: ChargeJson[];
}

export interface SimpleQuestionJson {
  kind: "simple";
  group_i: GroupValue;
  group_j: GroupValue;
}

export interface Phase3Params {
  k: number;
  gamma: number;
  rho_topk: number;
  rho_influ: number;
  rho_rank: number;
  conjuncts: number;
  eta: number;
}

export const DEFAULT_PHASE3: Phase3Params = {
  k: 5,
  gamma: 0.95,
  rho_topk: 0.5,
  rho_influ: 0.5,
  rho_rank: 1.0,
  conjuncts: 1,
  eta: 0.1,
};
