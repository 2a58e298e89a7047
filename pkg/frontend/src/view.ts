// DOM rendering. Tokens are rendered one element each so the rendered
// stream always round-trips to the served payload; highlights decorate exact
// token ranges and are distinguishable by underline and border, not color alone.

import { HighlightView, SuggestionItem, TaskPayload } from "./types";

export const KEEP_ORIGINAL = "(keep original)";

const DIRECTION_ARROWS: Record<string, string> = {
  "go straight": "↑",
  "turn right": "→",
  "turn around": "↓",
  "turn left": "←",
  "go up": "↗",
  "go down": "↘",
};

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderNotice(notice: string): HTMLElement {
  const box = el("div", "notice");
  box.setAttribute("role", "note");
  box.textContent = notice;
  return box;
}

export function renderNodeView(payload: TaskPayload): HTMLElement {
  const box = el("section", "node-view");
  box.appendChild(el("h2", "room-label", `You are in: ${payload.node.room}`));
  const objects = el("ul", "object-list");
  for (const [name, direction] of payload.node.objects) {
    objects.appendChild(el("li", "object-item", `${name} (${direction})`));
  }
  if (payload.node.objects.length === 0) {
    objects.appendChild(el("li", "object-item empty", "nothing notable here"));
  }
  box.appendChild(objects);

  const moves = el("div", "moves");
  for (const neighbor of payload.node.neighbors) {
    const button = el("button", "move-button") as HTMLButtonElement;
    button.dataset.target = neighbor.id;
    button.textContent = `${DIRECTION_ARROWS[neighbor.direction] ?? "?"} ${neighbor.direction}`;
    button.setAttribute("aria-label", `move ${neighbor.direction} to ${neighbor.id}`);
    moves.appendChild(button);
  }
  box.appendChild(moves);
  return box;
}

export function renderInstruction(payload: TaskPayload, clickable: boolean): HTMLElement {
  const box = el("section", "instruction");
  const para = el("p", "tokens");
  const byStart = new Map<number, HighlightView>();
  const covered = new Map<number, HighlightView>();
  for (const h of payload.instruction.highlights) {
    byStart.set(h.span[0], h);
    for (let i = h.span[0]; i <= h.span[1]; i++) covered.set(i, h);
  }
  let index = 0;
  const tokens = payload.instruction.tokens;
  while (index < tokens.length) {
    const highlight = byStart.get(index);
    if (highlight) {
      const mark = el(clickable ? "button" : "mark", "highlight");
      mark.dataset.span = highlight.key;
      mark.setAttribute("data-confidence", highlight.confidence.toFixed(3));
      for (let i = highlight.span[0]; i <= highlight.span[1]; i++) {
        const tok = el("span", "token", tokens[i]);
        tok.dataset.index = String(i);
        mark.appendChild(tok);
        if (i < highlight.span[1]) mark.appendChild(document.createTextNode(" "));
      }
      para.appendChild(mark);
      index = highlight.span[1] + 1;
    } else {
      const tok = el("span", "token", tokens[index]);
      tok.dataset.index = String(index);
      para.appendChild(tok);
      index += 1;
    }
    if (index < tokens.length) para.appendChild(document.createTextNode(" "));
  }
  box.appendChild(para);
  return box;
}

export function renderMenu(span: string, items: SuggestionItem[]): HTMLElement {
  const menu = el("div", "suggestion-menu");
  menu.dataset.span = span;
  menu.setAttribute("role", "menu");
  for (const item of items) {
    const button = el("button", "suggestion-item") as HTMLButtonElement;
    button.dataset.candidate = item.candidate;
    button.dataset.score = String(item.score);
    button.textContent = item.candidate === "[REMOVE]" ? "remove this phrase" : item.candidate;
    menu.appendChild(button);
  }
  const keep = el("button", "suggestion-item keep-original") as HTMLButtonElement;
  keep.dataset.candidate = KEEP_ORIGINAL;
  keep.textContent = KEEP_ORIGINAL;
  menu.appendChild(keep);
  return menu;
}

export function renderControls(payload: TaskPayload): HTMLElement {
  const box = el("div", "controls");
  const check = el("button", "check-button", "Check") as HTMLButtonElement;
  check.disabled = payload.controls.finalized;
  box.appendChild(check);
  if (payload.controls.can_revert) {
    box.appendChild(el("button", "revert-button", "Undo last correction"));
  }
  box.appendChild(
    el("span", "check-count", `checks used: ${payload.controls.checks_used}`),
  );
  return box;
}

export function renderQuestionnaire(): HTMLElement {
  const box = el("section", "questionnaire");
  box.appendChild(el("h2", undefined, "About this task"));
  const questions: [string, string][] = [
    ["easy_to_follow", "The instruction was easy to follow."],
    ["confident", "I am confident the path I followed is the intended path."],
    ["mental_demand", "The task was mentally demanding."],
  ];
  for (const [field, label] of questions) {
    const row = el("div", "likert-row");
    row.appendChild(el("span", "likert-label", label));
    for (let value = 1; value <= 5; value++) {
      const wrap = el("label", "likert-option");
      const input = document.createElement("input");
      input.type = "radio";
      input.name = field;
      input.value = String(value);
      wrap.appendChild(input);
      wrap.appendChild(document.createTextNode(String(value)));
      row.appendChild(wrap);
    }
    box.appendChild(row);
  }
  const submit = el("button", "rating-submit", "Continue") as HTMLButtonElement;
  box.appendChild(submit);
  return box;
}

export function renderOverlay(isPractice: boolean): HTMLElement {
  const overlay = el("div", "overlay");
  overlay.appendChild(el("h1", undefined, "Navigation task"));
  const steps = el("ol");
  for (const text of [
    "Read the instruction, then move through the house with the arrow buttons.",
    "Highlighted phrases (underlined, boxed) may be wrong. Click one to see suggested corrections, if available.",
    "Press Check when you believe you have reached the final location. You may check more than once.",
    "After finishing, answer three short questions.",
  ]) {
    steps.appendChild(el("li", undefined, text));
  }
  overlay.appendChild(steps);
  if (isPractice) {
    overlay.appendChild(el("p", "practice-banner", "This first run is a practice task."));
  }
  overlay.appendChild(el("button", "start-button", "Start"));
  return overlay;
}

export function renderError(message: string): HTMLElement {
  const box = el("div", "error-screen");
  box.setAttribute("role", "alert");
  box.appendChild(el("h1", undefined, "Something went wrong"));
  box.appendChild(el("p", undefined, message));
  return box;
}

export function renderComplete(checksUsed: number): HTMLElement {
  const box = el("div", "task-complete");
  box.appendChild(el("h2", undefined, "You found the final location!"));
  box.appendChild(el("p", undefined, `Checks used: ${checksUsed}`));
  return box;
}

export function renderSessionDone(): HTMLElement {
  const box = el("div", "session-done");
  box.appendChild(el("h1", undefined, "All tasks complete"));
  box.appendChild(el("p", undefined, "Thank you! You may close this window."));
  return box;
}
