/**
 * Bindings parity gate: boundAugment must return exactly the bytes the CLI
 * writes as its TensorDump output for the same batch, config, and seed, for
 * ten (seed, config) pairs, and service-side rejections must surface the
 * core error messages.
 */

import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ProRandConvClient } from "../src/index.js";
import { readTensorDump, writeTensorDump } from "../src/tensordump.js";
import { randomBatch, runCli, startServer, type ServerHandle } from "./helpers.js";

interface Pair {
  seed: number;
  config: Record<string, unknown>;
  shape: [number, number, number, number];
}

const PAIRS: Pair[] = [
  { seed: 1, config: {}, shape: [2, 3, 16, 16] },
  { seed: 2, config: { l_max: 3 }, shape: [1, 3, 12, 12] },
  { seed: 3, config: { enable_offsets: false }, shape: [3, 3, 8, 8] },
  { seed: 4, config: { enable_smoothing: false }, shape: [2, 3, 10, 10] },
  { seed: 5, config: { enable_contrast: false, l_max: 4 }, shape: [1, 3, 16, 16] },
  { seed: 6, config: { grf_alpha: 0.5 }, shape: [2, 3, 12, 12] },
  { seed: 7, config: { sigma_gamma: 1.5, sigma_beta: 0.1 }, shape: [1, 3, 8, 8] },
  { seed: 8, config: { kernel_size: 5, l_max: 4 }, shape: [2, 3, 14, 14] },
  { seed: 9, config: { offset_bound: 0.5 }, shape: [1, 3, 20, 20] },
  { seed: 10, config: { smooth_bound: 0.3, eps: 1e-5 }, shape: [2, 3, 9, 9] },
];

let server: ServerHandle;
let client: ProRandConvClient;

before(async () => {
  server = await startServer();
  client = new ProRandConvClient(server.baseUrl);
});

after(() => {
  server.stop();
});

test("boundAugment matches the CLI TensorDump bit-exactly for 10 pairs", async () => {
  for (const pair of PAIRS) {
    const count = pair.shape.reduce((a, b) => a * b, 1);
    const batch = randomBatch(1000 + pair.seed, count);

    const work = mkdtempSync(join(tmpdir(), "prc-parity-"));
    const inPath = join(work, "batch.prct");
    writeFileSync(inPath, writeTensorDump(pair.shape, batch));
    const cfgPath = join(work, "cfg.json");
    writeFileSync(cfgPath, JSON.stringify({ augment: pair.config }));
    const outDir = join(work, "out");
    await runCli([
      "augment",
      "--input", inPath,
      "--output", outDir,
      "--config", cfgPath,
      "--seed", String(pair.seed),
    ]);
    const cliDump = readTensorDump(readFileSync(join(outDir, `batch_s${pair.seed}_v0.prct`)));
    const cliMeta = JSON.parse(
      readFileSync(join(outDir, `batch_s${pair.seed}_v0.json`), "utf-8"),
    ) as { l_used: number };

    const got = await client.boundAugment(batch, pair.shape, JSON.stringify(pair.config),
                                          pair.seed);
    assert.equal(got.lUsed, cliMeta.l_used, `l_used mismatch for seed ${pair.seed}`);
    assert.deepEqual(got.shape, pair.shape);
    assert.equal(
      Buffer.compare(Buffer.from(got.data.buffer), Buffer.from(cliDump.data.buffer)),
      0,
      `payload mismatch for seed ${pair.seed}`,
    );
  }
});

test("zero-size batches are rejected", async () => {
  await assert.rejects(
    client.boundAugment(new Float32Array(0), [0, 3, 4, 4]),
    /nonempty/,
  );
});

test("non-RGB channel counts are rejected with the channel error", async () => {
  const batch = randomBatch(3, 1 * 4 * 4 * 4);
  await assert.rejects(client.boundAugment(batch, [1, 4, 4, 4]), /3-channel/);
});

test("length mismatches fail locally before any request", async () => {
  await assert.rejects(
    client.boundAugment(new Float32Array(5), [1, 3, 4, 4]),
    /requires 48 values/,
  );
});

test("invalid config text fails locally", async () => {
  const batch = randomBatch(4, 48);
  await assert.rejects(client.boundAugment(batch, [1, 3, 4, 4], "{oops"), /not valid JSON/);
});

test("unknown config keys surface the service message", async () => {
  const batch = randomBatch(5, 48);
  await assert.rejects(client.boundAugment(batch, [1, 3, 4, 4], '{"lmax": 2}'), /lmax/);
});

test("reps pins the repetition count", async () => {
  const batch = randomBatch(6, 2 * 3 * 8 * 8);
  const out = await client.boundAugment(batch, [2, 3, 8, 8], "{}", 42, 3);
  assert.equal(out.lUsed, 3);
});

test("version string matches the service", async () => {
  const v = await client.version();
  assert.match(v, /^\d+\.\d+\.\d+$/);
});
