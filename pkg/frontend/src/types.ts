// Wire types mirroring the query service's JSON bodies.

export interface AxisInfo {
  name: string;
  dim: number;
}

export interface AxesResponse {
  axes: AxisInfo[];
  item_count: number;
  label_fields: string[];
  corpora: string[];
}

export interface ResultRow {
  item_id: string;
  corpus: string;
  labels: Record<string, string>;
  score: number;
  rank: number;
  per_axis: Record<string, number>;
}

export interface QueryResponse {
  results: ResultRow[];
  weights: Record<string, number>;
  empty_after_filter: boolean;
  timing_ms: number;
}

export interface QueryRequest {
  query_id: string;
  weights: Record<string, number>;
  k: number;
  exclude_self: boolean;
}
