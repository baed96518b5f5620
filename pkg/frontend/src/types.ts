// Shapes of the service's JSON API. Unknown extra fields are ignored by
// construction: only these properties are ever read.

export interface GraphNode {
  id: string;
}

export interface GraphEdge {
  source: string;
  target: string;
  label: string;
}

export interface GraphDoc {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface Hit {
  chunk_id: string;
  score: number;
  source: string;
  page: number;
}

export interface QueryResponse {
  answer: string;
  graph: GraphDoc;
  hits: Hit[];
  skipped_triples: number;
}

export interface SessionResponse {
  session_id: string;
  active_model: string;
}

export interface DocumentInfo {
  name: string;
  size: number;
}

export interface HistoryTurn {
  role: string;
  content: string;
}

export interface HistoryResponse {
  turns: HistoryTurn[];
  active_model: string;
}

export const EMPTY_GRAPH: GraphDoc = { nodes: [], edges: [] };
