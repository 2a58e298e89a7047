// Controller: wires the study client to the DOM. One mutating request is in
// flight at a time; controls are disabled while awaiting the server, and the
// rendered instruction always comes from the last server response.

import { ApiError, SchemaMismatch, StudyClient } from "./api";
import {
  LocalSessionState,
  currentTaskId,
  newSessionState,
  ratingComplete,
  recordApply,
  recordMove,
} from "./state";
import { Condition, RatingForm, SuggestionItem, TaskPayload } from "./types";
import {
  KEEP_ORIGINAL,
  renderComplete,
  renderControls,
  renderError,
  renderInstruction,
  renderMenu,
  renderNodeView,
  renderNotice,
  renderOverlay,
  renderQuestionnaire,
  renderSessionDone,
} from "./view";

export class StudyApp {
  client: StudyClient;
  root: HTMLElement;
  state: LocalSessionState | null = null;
  phase: "overlay" | "task" | "questionnaire" | "done" | "error" = "overlay";
  lastError = "";
  private completedChecks = 0;

  constructor(client: StudyClient, root: HTMLElement) {
    this.client = client;
    this.root = root;
    this.root.addEventListener("click", (event) => {
      void this.onClick(event);
    });
    this.root.addEventListener("change", () => this.onFormChange());
  }

  async start(condition: Condition, seed: number, isPractice = false): Promise<void> {
    try {
      const session = await this.client.createSession(condition, seed);
      this.state = newSessionState(session.session_id, session.condition, session.task_ids, isPractice);
      this.phase = "overlay";
      this.render();
    } catch (error) {
      this.fail(error);
    }
  }

  async beginTasks(): Promise<void> {
    if (!this.state) return;
    this.phase = "task";
    await this.loadTask();
  }

  private async loadTask(): Promise<void> {
    if (!this.state) return;
    try {
      const payload = await this.client.getTask(this.state.sessionId, currentTaskId(this.state));
      this.state.payload = payload;
      this.state.openMenu = null;
      if (!this.state.moveHistory.has(payload.task_id)) {
        recordMove(this.state, payload.task_id, payload.node.id);
      }
      this.render();
    } catch (error) {
      this.fail(error);
    }
  }

  private async onClick(event: Event): Promise<void> {
    const target = event.target as HTMLElement;
    const button = target.closest("button") as HTMLButtonElement | null;
    if (!button || !this.root.contains(button)) return;
    if (button.classList.contains("start-button")) {
      await this.beginTasks();
      return;
    }
    const state = this.state;
    if (!state || state.busy) return;

    if (button.classList.contains("move-button") && button.dataset.target) {
      await this.mutate(async () => {
        const payload = await this.client.move(state.sessionId, currentTaskId(state), button.dataset.target!);
        state.payload = payload;
        state.openMenu = null;
        recordMove(state, payload.task_id, payload.node.id);
      });
    } else if (button.classList.contains("check-button")) {
      await this.mutate(async () => {
        const result = await this.client.check(state.sessionId, currentTaskId(state));
        if (result.success) {
          this.completedChecks = result.checks_used;
          this.phase = "questionnaire";
        } else if (state.payload) {
          state.payload.controls.checks_used = result.checks_used;
        }
      });
    } else if (button.classList.contains("highlight") && button.dataset.span) {
      await this.toggleMenu(button.dataset.span);
    } else if (button.classList.contains("suggestion-item") && state.openMenu) {
      await this.chooseSuggestion(button.dataset.candidate ?? "");
    } else if (button.classList.contains("revert-button")) {
      await this.mutate(async () => {
        const payload = await this.client.revert(state.sessionId, currentTaskId(state));
        state.payload = payload;
        state.openMenu = null;
      });
    } else if (button.classList.contains("rating-submit")) {
      await this.submitRating();
    }
  }

  private onFormChange(): void {
    if (!this.state || this.phase !== "questionnaire") return;
    const form: Partial<RatingForm> = {};
    for (const field of ["easy_to_follow", "confident", "mental_demand"] as const) {
      const checked = this.root.querySelector<HTMLInputElement>(`input[name="${field}"]:checked`);
      if (checked) form[field] = Number(checked.value);
    }
    this.state.pendingRating = form;
  }

  private async toggleMenu(span: string): Promise<void> {
    const state = this.state!;
    if (state.openMenu && state.openMenu.span === span) {
      state.openMenu = null; // second click closes; no server call, no duplicate event
      this.render();
      return;
    }
    if (!state.payload?.controls.suggestions_enabled) return; // affordance absent anyway
    await this.mutate(async () => {
      const payload = await this.client.getSuggestions(state.sessionId, currentTaskId(state), span);
      state.openMenu = { span, items: payload.items };
    });
  }

  private async chooseSuggestion(candidate: string): Promise<void> {
    const state = this.state!;
    const menu = state.openMenu!;
    if (candidate === KEEP_ORIGINAL) {
      state.openMenu = null; // keeping the original phrase is purely client-side
      this.render();
      return;
    }
    const served: SuggestionItem | undefined = menu.items.find((s) => s.candidate === candidate);
    if (!served) return; // never apply a candidate the server did not serve
    await this.mutate(async () => {
      const payload = await this.client.apply(state.sessionId, currentTaskId(state), menu.span, served.candidate);
      state.payload = payload;
      state.openMenu = null; // applying closes the menu
      recordApply(state, payload.task_id);
    });
  }

  private async submitRating(): Promise<void> {
    const state = this.state!;
    if (!ratingComplete(state.pendingRating)) {
      this.flash("Please answer all three questions.");
      return;
    }
    await this.mutate(async () => {
      await this.client.rate(state.sessionId, currentTaskId(state), state.pendingRating as RatingForm);
      state.pendingRating = {};
      if (state.taskIndex + 1 < state.taskIds.length) {
        state.taskIndex += 1;
        this.phase = "task";
        const payload = await this.client.getTask(state.sessionId, currentTaskId(state));
        state.payload = payload;
        state.openMenu = null;
        recordMove(state, payload.task_id, payload.node.id);
      } else {
        await this.client.submit(state.sessionId);
        this.phase = "done";
      }
    });
  }

  private async mutate(action: () => Promise<void>): Promise<void> {
    const state = this.state!;
    state.busy = true;
    this.render();
    try {
      await action();
    } catch (error) {
      if (error instanceof ApiError) {
        this.flash(error.message); // server rejection surfaces inline, view unchanged
      } else {
        this.fail(error);
        return;
      }
    } finally {
      state.busy = false;
    }
    this.render();
  }

  private flash(message: string): void {
    this.lastError = message;
  }

  private fail(error: unknown): void {
    this.phase = "error";
    this.lastError =
      error instanceof SchemaMismatch
        ? `Incompatible server: ${error.message}`
        : String(error instanceof Error ? error.message : error);
    this.render();
  }

  render(): void {
    this.root.textContent = "";
    if (this.phase === "error") {
      this.root.appendChild(renderError(this.lastError));
      return;
    }
    const state = this.state;
    if (!state) return;
    if (this.phase === "overlay") {
      this.root.appendChild(renderOverlay(state.isPractice));
      return;
    }
    if (this.phase === "done") {
      this.root.appendChild(renderSessionDone());
      return;
    }
    if (this.phase === "questionnaire") {
      this.root.appendChild(renderComplete(this.completedChecks));
      this.root.appendChild(renderQuestionnaire());
      return;
    }
    const payload = state.payload;
    if (!payload) return;
    this.root.appendChild(renderNotice(payload.notice));
    this.root.appendChild(
      renderInstruction(payload, payload.controls.suggestions_enabled),
    );
    if (state.openMenu) {
      this.root.appendChild(renderMenu(state.openMenu.span, state.openMenu.items));
    }
    this.root.appendChild(renderNodeView(payload));
    this.root.appendChild(renderControls(payload));
    if (this.lastError) {
      const note = renderNotice(this.lastError);
      note.className = "inline-error";
      this.root.appendChild(note);
      this.lastError = "";
    }
    if (state.busy) {
      this.root
        .querySelectorAll<HTMLButtonElement>("button")
        .forEach((b) => (b.disabled = true));
    }
  }
}

export function taskView(app: StudyApp): TaskPayload | null {
  return app.state?.payload ?? null;
}
