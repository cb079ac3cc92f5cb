import { spawn, execFile, type ChildProcess } from "node:child_process";

const PYTHON = process.env.PRORANDCONV_PYTHON ?? "python3";

export interface ServerHandle {
  baseUrl: string;
  stop: () => void;
}

/** Start the augmentation service and wait until /health answers. */
export async function startServer(): Promise<ServerHandle> {
  const port = 8700 + (process.pid % 250);
  const proc: ChildProcess = spawn(
    PYTHON,
    ["-m", "uvicorn", "prorandconv.service:app", "--host", "127.0.0.1", "--port", String(port)],
    { stdio: "ignore" },
  );
  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 120_000;
  for (;;) {
    try {
      const resp = await fetch(`${baseUrl}/health`);
      if (resp.ok) {
        break;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error("service did not become healthy within 120s");
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  return { baseUrl, stop: () => proc.kill() };
}

/** Run the Python CLI, rejecting on a nonzero exit code. */
export function runCli(args: string[]): Promise<{ stdout: string; stderr: string }> {
  return new Promise((resolve, reject) => {
    execFile(PYTHON, ["-m", "prorandconv.cli", ...args], (err, stdout, stderr) => {
      if (err) {
        reject(new Error(`cli failed: ${stderr || err.message}`));
      } else {
        resolve({ stdout, stderr });
      }
    });
  });
}

/** Deterministic light-weight PRNG for generating test batches. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomBatch(seed: number, count: number): Float32Array {
  const rng = mulberry32(seed);
  const out = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = rng() * 2 - 1;
  }
  return out;
}
