// Local session state: applied-edit history and the pending rating form.
// Never holds suggestion data the server did not serve (condition gating
// is mirrored client-side by construction).

import { RatingForm, SuggestionItem, TaskPayload } from "./types";

export interface LocalSessionState {
  sessionId: string;
  condition: string;
  taskIds: string[];
  taskIndex: number;
  payload: TaskPayload | null;
  appliedHistory: Map<string, number>; // task id -> applied edit count
  moveHistory: Map<string, string[]>; // task id -> visited node ids
  openMenu: { span: string; items: SuggestionItem[] } | null;
  pendingRating: Partial<RatingForm>;
  busy: boolean; // one mutating request in flight at a time
  isPractice: boolean;
}

export function newSessionState(
  sessionId: string,
  condition: string,
  taskIds: string[],
  isPractice: boolean,
): LocalSessionState {
  return {
    sessionId,
    condition,
    taskIds,
    taskIndex: 0,
    payload: null,
    appliedHistory: new Map(),
    moveHistory: new Map(),
    openMenu: null,
    pendingRating: {},
    busy: false,
    isPractice,
  };
}

export function currentTaskId(state: LocalSessionState): string {
  return state.taskIds[state.taskIndex];
}

export function recordMove(state: LocalSessionState, taskId: string, node: string): void {
  const visited = state.moveHistory.get(taskId) ?? [];
  visited.push(node);
  state.moveHistory.set(taskId, visited);
}

export function recordApply(state: LocalSessionState, taskId: string): void {
  state.appliedHistory.set(taskId, (state.appliedHistory.get(taskId) ?? 0) + 1);
}

export function ratingComplete(form: Partial<RatingForm>): form is RatingForm {
  return (
    typeof form.easy_to_follow === "number" &&
    typeof form.confident === "number" &&
    typeof form.mental_demand === "number"
  );
}
