// Wire types mirroring the study service payload schema (schema_version 1).

export const SCHEMA_VERSION = 1;

export type Condition =
  | "none"
  | "model_highlights"
  | "model_full"
  | "oracle_highlights"
  | "oracle_full";

export interface SessionPayload {
  schema_version: number;
  session_id: string;
  condition: Condition;
  task_ids: string[];
}

export interface NeighborView {
  id: string;
  direction: string; // turn left | turn right | go straight | turn around | go up | go down
}

export interface NodeView {
  id: string;
  room: string;
  objects: [string, string][]; // [name, egocentric direction]
  neighbors: NeighborView[];
}

export interface HighlightView {
  key: string; // "start-end" over token indices
  span: [number, number];
  confidence: number;
  members: [number, number, string][];
  clause_level: boolean;
}

export interface InstructionView {
  tokens: string[];
  highlights: HighlightView[];
}

export interface Controls {
  suggestions_enabled: boolean;
  checks_used: number;
  finalized: boolean;
  can_revert: boolean;
}

export interface TaskPayload {
  schema_version: number;
  task_id: string;
  condition: Condition;
  notice: string;
  node: NodeView;
  instruction: InstructionView;
  controls: Controls;
}

export interface SuggestionItem {
  candidate: string;
  score: number;
  target: [number, number] | null;
}

export interface SuggestionsPayload {
  schema_version: number;
  highlight: string;
  items: SuggestionItem[];
}

export interface CheckPayload {
  schema_version: number;
  success: boolean;
  checks_used: number;
  finalized: boolean;
}

export interface RatingForm {
  easy_to_follow: number;
  confident: number;
  mental_demand: number;
}
