// Spawns the Python study service once for the whole test run.

import { spawn, ChildProcess } from "node:child_process";

const PORT = 8787;
let server: ChildProcess | null = null;

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`http://127.0.0.1:${PORT}/export`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("fixture server did not come up in time");
}

export async function setup(): Promise<void> {
  server = spawn("python3", ["tests/server.py"], {
    cwd: new URL("..", import.meta.url).pathname,
    env: { ...process.env, NAVHINT_TEST_PORT: String(PORT) },
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer(120_000);
}

export async function teardown(): Promise<void> {
  if (server) {
    server.kill("SIGTERM");
    server = null;
  }
}
