// Boot: read the condition, seed, and server from query parameters and start.

import { StudyClient } from "./api";
import { StudyApp } from "./app";
import { Condition } from "./types";

const CONDITIONS: Condition[] = [
  "none",
  "model_highlights",
  "model_full",
  "oracle_highlights",
  "oracle_full",
];

function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const conditionParam = params.get("condition") ?? "model_full";
  const condition = CONDITIONS.includes(conditionParam as Condition)
    ? (conditionParam as Condition)
    : "model_full";
  const seed = Number(params.get("seed") ?? "0");
  const practice = params.get("practice") === "1";
  const server = params.get("server") ?? "";

  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const app = new StudyApp(new StudyClient(server), root);
  void app.start(condition, seed, practice);
}

boot();
