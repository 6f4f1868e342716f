/** Wire types mirroring the session service JSON payloads. */

export interface CellPayload {
  index: number;
  layer: number;
  x: number;
  y: number;
  gamma: number;
  occupant: string | null;
}

export interface LayoutPayload {
  cells: CellPayload[];
  assignments: Record<string, number>;
  loss_history: number[];
}

export interface PromptPayload {
  text: string;
  weight: number;
}

export interface LayerGamma {
  layer: number;
  gamma: number;
}

export interface MapPayload {
  session_id: string;
  version: number;
  n_docs: number;
  prompts: PromptPayload[];
  layout: LayoutPayload;
  colors: Record<string, number>;
  per_layer_gamma: LayerGamma[];
  relevances: Record<string, number>;
}

export interface TopicTokenPayload {
  t: string;
  w: number;
}

export interface TopicPayload {
  id: number;
  tokens: TopicTokenPayload[];
}

export interface TopicsPayload {
  session_id: string;
  version: number;
  k: number;
  topics: TopicPayload[];
  doc_topic_weights: Record<string, number[]>;
}

export interface DocTokenPayload {
  t: string;
  weight: number;
}

export interface DocPayload {
  session_id: string;
  version: number;
  doc_id: string;
  title: string;
  text: string;
  tokens: DocTokenPayload[];
  raw_relevance: number;
  relevance: number;
}

export interface SessionCreated {
  session_id: string;
  version: number;
  n_docs: number;
  dim: number;
}

export interface LassoCreated {
  session_id: string;
  version: number;
  n_docs: number;
}

export interface DocIn {
  id: string;
  title?: string;
  text: string;
}

export interface CreateSessionBody {
  csv_text?: string;
  docs?: DocIn[];
  store_path?: string;
  checkpoint_path?: string;
  dim?: number;
  seed?: number;
  omega_s?: number;
  omega_r?: number;
  map_epochs?: number;
  map_lr?: number;
  slack?: number;
  topic_k?: number;
  topic_auto?: boolean;
  topic_iters?: number;
  cluster_k_max?: number;
  vocab_cap?: number;
}
