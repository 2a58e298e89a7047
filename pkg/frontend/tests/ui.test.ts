// End-to-end UI tests against a live study service (spawned in globalSetup).
// S1: one task completed per condition, with event-log replay and gating checks.
// S2: rendered highlight spans byte-match the served payload spans.

import { beforeEach, describe, expect, it } from "vitest";

import { StudyClient } from "../src/api";
import { StudyApp } from "../src/app";
import { Condition, TaskPayload } from "../src/types";

const BASE = "http://127.0.0.1:8787";
const CONDITIONS: Condition[] = [
  "none",
  "model_highlights",
  "model_full",
  "oracle_highlights",
  "oracle_full",
];

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(predicate: () => boolean, timeoutMs = 10_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await sleep(10);
  }
  throw new Error("timed out waiting for UI state");
}

function freshRoot(): HTMLElement {
  document.body.innerHTML = '<div id="app"></div>';
  return document.getElementById("app")!;
}

async function startApp(condition: Condition, seed: number): Promise<{ app: StudyApp; root: HTMLElement }> {
  const root = freshRoot();
  const app = new StudyApp(new StudyClient(BASE), root);
  await app.start(condition, seed);
  await waitFor(() => root.querySelector(".start-button") !== null);
  (root.querySelector(".start-button") as HTMLButtonElement).click();
  await waitFor(() => root.querySelector(".tokens") !== null || root.querySelector(".error-screen") !== null);
  expect(root.querySelector(".error-screen")).toBeNull();
  return { app, root };
}

function currentNodeId(app: StudyApp): string {
  return app.state!.payload!.node.id;
}

async function clickMove(app: StudyApp, root: HTMLElement, target: string): Promise<void> {
  const before = currentNodeId(app);
  const button = [...root.querySelectorAll<HTMLButtonElement>(".move-button")].find(
    (b) => b.dataset.target === target,
  );
  expect(button, `move button to ${target}`).toBeTruthy();
  button!.click();
  await waitFor(() => currentNodeId(app) === target || currentNodeId(app) !== before);
}

async function pressCheck(app: StudyApp, root: HTMLElement): Promise<boolean> {
  const before = app.state!.payload!.controls.checks_used;
  (root.querySelector(".check-button") as HTMLButtonElement).click();
  await waitFor(
    () =>
      app.phase === "questionnaire" ||
      (app.state!.payload?.controls.checks_used ?? before) > before,
  );
  return app.phase === "questionnaire";
}

/** Depth-first search through the UI: move, press Check at every new node. */
async function completeTask(app: StudyApp, root: HTMLElement): Promise<void> {
  if (await pressCheck(app, root)) return;
  const visited = new Set<string>([currentNodeId(app)]);
  const path: string[] = [currentNodeId(app)];

  while (true) {
    const neighbors = app.state!.payload!.node.neighbors.map((n) => n.id);
    const next = neighbors.find((n) => !visited.has(n));
    if (next) {
      await clickMove(app, root, next);
      visited.add(next);
      path.push(next);
      if (await pressCheck(app, root)) return;
    } else {
      path.pop();
      const back = path[path.length - 1];
      if (!back) throw new Error("exhausted the graph without success");
      await clickMove(app, root, back);
    }
  }
}

async function fillQuestionnaireAndContinue(app: StudyApp, root: HTMLElement): Promise<void> {
  await waitFor(() => root.querySelector(".questionnaire") !== null);
  for (const field of ["easy_to_follow", "confident", "mental_demand"]) {
    const radio = root.querySelector<HTMLInputElement>(`input[name="${field}"][value="4"]`)!;
    radio.checked = true;
    radio.dispatchEvent(new Event("change", { bubbles: true }));
  }
  const index = app.state!.taskIndex;
  (root.querySelector(".rating-submit") as HTMLButtonElement).click();
  await waitFor(() => app.state!.taskIndex > index || app.phase === "done");
}

async function exportedEvents(sessionId: string): Promise<Record<string, unknown>[]> {
  const response = await fetch(`${BASE}/export`);
  const lines: string[] = (await response.json()).lines;
  return lines
    .map((line) => JSON.parse(line) as Record<string, unknown>)
    .filter((record) => record.session === sessionId);
}

function renderedHighlightSpans(root: HTMLElement): Map<string, string[]> {
  const spans = new Map<string, string[]>();
  root.querySelectorAll<HTMLElement>("[data-span]").forEach((mark) => {
    if (!mark.classList.contains("highlight")) return;
    const tokens = [...mark.querySelectorAll<HTMLElement>(".token")].map((t) => t.textContent ?? "");
    spans.set(mark.dataset.span!, tokens);
  });
  return spans;
}

function renderedTokenStream(root: HTMLElement): string[] {
  return [...root.querySelectorAll<HTMLElement>(".tokens .token")].map((t) => t.textContent ?? "");
}

describe("S1: one task per condition, end to end", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  for (const condition of CONDITIONS) {
    it(`completes a task under ${condition} and the event log replays the trajectory`, async () => {
      const { app, root } = await startApp(condition, 100 + CONDITIONS.indexOf(condition));
      const sessionId = app.state!.sessionId;
      const taskId = app.state!.payload!.task_id;

      await completeTask(app, root);
      expect(app.phase).toBe("questionnaire");
      await fillQuestionnaireAndContinue(app, root);

      const events = await exportedEvents(sessionId);
      const accepted = events.filter(
        (e) =>
          e.kind === "move" &&
          e.task === taskId &&
          !(e.payload as { rejected?: boolean }).rejected,
      );
      const replayed = [
        app.state!.moveHistory.get(taskId)![0],
        ...accepted.map((e) => (e.payload as { target: string }).target),
      ];
      expect(replayed).toEqual(app.state!.moveHistory.get(taskId));
      const checks = events.filter((e) => e.kind === "check" && e.task === taskId).length;
      expect(checks).toBeGreaterThanOrEqual(1);
      const ratings = events.filter((e) => e.kind === "rating" && e.task === taskId).length;
      expect(ratings).toBe(1);
    });
  }

  it("serves no suggestion data under none and highlights-only conditions", async () => {
    for (const condition of ["none", "model_highlights", "oracle_highlights"] as Condition[]) {
      const client = new StudyClient(BASE);
      const session = await client.createSession(condition, 55);
      for (const taskId of session.task_ids) {
        const raw = await fetch(`${BASE}/session/${session.session_id}/task/${taskId}`);
        const text = await raw.text();
        expect(text).not.toContain('"candidate"');
        expect(text).not.toContain('"items"');
        const payload = JSON.parse(text) as TaskPayload;
        if (condition === "none") {
          expect(payload.instruction.highlights).toEqual([]);
        }
        expect(payload.controls.suggestions_enabled).toBe(false);
        for (const h of payload.instruction.highlights) {
          const refused = await fetch(
            `${BASE}/session/${session.session_id}/task/${taskId}/suggestions?span=${h.key}`,
          );
          expect(refused.status).toBe(403);
        }
      }
    }
  });

  it("renders no clickable suggestion affordance under highlights-only", async () => {
    const { root } = await startApp("model_highlights", 56);
    const marks = root.querySelectorAll(".highlight");
    marks.forEach((mark) => expect(mark.tagName.toLowerCase()).toBe("mark"));
    expect(root.querySelector(".suggestion-menu")).toBeNull();
  });

  it("oracle_full menus show exactly 2 server items plus keep-original", async () => {
    const client = new StudyClient(BASE);
    let inspected = 0;
    for (let seed = 200; seed < 215 && inspected === 0; seed++) {
      const { app, root } = await startApp("oracle_full", seed);
      for (let t = 0; t < app.state!.taskIds.length && inspected === 0; t++) {
        const highlight = root.querySelector<HTMLButtonElement>("button.highlight");
        if (highlight) {
          highlight.click();
          await waitFor(() => root.querySelector(".suggestion-menu") !== null);
          const items = [...root.querySelectorAll<HTMLButtonElement>(".suggestion-item")];
          const served = items.filter((i) => !i.classList.contains("keep-original"));
          expect(served.length).toBe(2);
          expect(items[items.length - 1].classList.contains("keep-original")).toBe(true);
          const scores = served.map((i) => Number(i.dataset.score));
          expect(scores[0]).toBeGreaterThanOrEqual(scores[1]);
          inspected += 1;
        } else if (t + 1 < app.state!.taskIds.length) {
          await completeTask(app, root);
          await fillQuestionnaireAndContinue(app, root);
        } else {
          break;
        }
      }
    }
    expect(inspected).toBeGreaterThan(0);
    void client;
  });

  it("model_full menus show at most 3 items in descending score order and apply/revert round-trips", async () => {
    let inspected = 0;
    for (let seed = 300; seed < 315 && inspected === 0; seed++) {
      const { app, root } = await startApp("model_full", seed);
      for (let t = 0; t < app.state!.taskIds.length && inspected === 0; t++) {
        const highlight = root.querySelector<HTMLButtonElement>("button.highlight");
        if (highlight) {
          const originalTokens = renderedTokenStream(root);
          highlight.click();
          await waitFor(() => root.querySelector(".suggestion-menu") !== null);
          const served = [...root.querySelectorAll<HTMLButtonElement>(".suggestion-item")].filter(
            (i) => !i.classList.contains("keep-original"),
          );
          expect(served.length).toBeGreaterThanOrEqual(1);
          expect(served.length).toBeLessThanOrEqual(3);
          const scores = served.map((i) => Number(i.dataset.score));
          const sorted = [...scores].sort((a, b) => b - a);
          expect(scores).toEqual(sorted);

          served[0].click();
          await waitFor(() => root.querySelector(".suggestion-menu") === null);
          const appliedTokens = renderedTokenStream(root);
          expect(appliedTokens).toEqual(app.state!.payload!.instruction.tokens);

          const revert = root.querySelector<HTMLButtonElement>(".revert-button");
          expect(revert).toBeTruthy();
          revert!.click();
          await waitFor(() => renderedTokenStream(root).join(" ") === originalTokens.join(" "));
          inspected += 1;
        } else if (t + 1 < app.state!.taskIds.length) {
          await completeTask(app, root);
          await fillQuestionnaireAndContinue(app, root);
        } else {
          break;
        }
      }
    }
    expect(inspected).toBeGreaterThan(0);
  });

  it("second click on an open highlight closes the menu without a duplicate event", async () => {
    for (let seed = 400; seed < 415; seed++) {
      const { app, root } = await startApp("oracle_full", seed);
      const highlight = root.querySelector<HTMLButtonElement>("button.highlight");
      if (!highlight) continue;
      const sessionId = app.state!.sessionId;
      const span = highlight.dataset.span!;
      highlight.click();
      await waitFor(() => root.querySelector(".suggestion-menu") !== null);
      const openCount = (await exportedEvents(sessionId)).filter((e) => e.kind === "open_menu").length;
      const again = root.querySelector<HTMLButtonElement>(`button.highlight[data-span="${span}"]`)!;
      again.click();
      await waitFor(() => root.querySelector(".suggestion-menu") === null);
      const afterCount = (await exportedEvents(sessionId)).filter((e) => e.kind === "open_menu").length;
      expect(afterCount).toBe(openCount);
      return;
    }
    throw new Error("no highlighted task found to exercise the toggle");
  });

  it("completes a whole session, including the final submit", async () => {
    const { app, root } = await startApp("none", 77);
    const sessionId = app.state!.sessionId;
    while (app.phase !== "done") {
      await completeTask(app, root);
      await fillQuestionnaireAndContinue(app, root);
    }
    expect(root.querySelector(".session-done")).toBeTruthy();
    const events = await exportedEvents(sessionId);
    expect(events.filter((e) => e.kind === "submit").length).toBe(1);
  });
});

describe("S2: rendered highlights byte-match served spans", () => {
  it("20 random tasks render spans identical to the payload", async () => {
    const client = new StudyClient(BASE);
    let checked = 0;
    outer: for (let seed = 500; seed < 540; seed++) {
      const condition = CONDITIONS[seed % CONDITIONS.length];
      const { app, root } = await startApp(condition, seed);
      for (let t = 0; t < app.state!.taskIds.length; t++) {
        const payload = app.state!.payload!;
        const rendered = renderedHighlightSpans(root);
        expect(rendered.size).toBe(payload.instruction.highlights.length);
        for (const h of payload.instruction.highlights) {
          const domTokens = rendered.get(h.key);
          expect(domTokens, `highlight ${h.key}`).toBeTruthy();
          const servedTokens = payload.instruction.tokens.slice(h.span[0], h.span[1] + 1);
          expect(domTokens).toEqual(servedTokens);
        }
        expect(renderedTokenStream(root)).toEqual(payload.instruction.tokens);
        checked += 1;
        if (checked >= 20) break outer;
        if (t + 1 < app.state!.taskIds.length) {
          await completeTask(app, root);
          await fillQuestionnaireAndContinue(app, root);
        }
      }
    }
    expect(checked).toBeGreaterThanOrEqual(20);
    void client;
  });
});
