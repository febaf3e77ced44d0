// Payload shapes for the annotation service JSON API.

export type PanelInfo = {
  id: string;
  image_uri: string | null;
};

export type PairPayload = {
  query_id: string;
  a: PanelInfo;
  b: PanelInfo;
  probability: number;
};

export type CycleRecord = Record<string, number>;

export type Progress = {
  cycle: number;
  num_cycles: number;
  budget_allotted: number;
  budget_used: number;
  batch_budget: number;
  batch_used: number;
  answered: number;
  skipped: number;
  outstanding: number;
  done: boolean;
  history: CycleRecord[];
};

export type SessionInfo = Progress & {
  session_id: string;
  num_samples: number;
  pool_os_size: number;
  pool_us_size: number;
};

export type AnswerLabel = "ml" | "cl" | "skip";

// What the annotator sees; mapped to AnswerLabel at the API boundary.
export type HumanAnswer = "same" | "different" | "skip";
