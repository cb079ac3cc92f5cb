/**
 * Client bindings for the prorandconv augmentation service.
 *
 * One call, array in / array out: `boundAugment` posts a contiguous float32
 * N x C x H x W batch plus a config JSON text and a seed, and returns the
 * augmented batch with the repetition count that was used. No augmentation
 * logic lives here; the service output is bit-exact with the CLI's tensor
 * dumps for the same config and seed, and all validation errors surface the
 * core package's messages.
 */

export type BatchShape = [number, number, number, number];

export interface AugmentResult {
  data: Float32Array;
  shape: BatchShape;
  lUsed: number;
}

interface AugmentResponseBody {
  shape: number[];
  data_b64: string;
  l_used: number;
}

function prod(shape: readonly number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      return body.detail;
    }
    return JSON.stringify(body.detail ?? body);
  } catch {
    return `HTTP ${resp.status}`;
  }
}

export class ProRandConvClient {
  readonly baseUrl: string;

  constructor(baseUrl = "http://127.0.0.1:8000") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  /** Service package version string. */
  async version(): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/version`);
    if (!resp.ok) {
      throw new Error(`version request failed: ${await errorDetail(resp)}`);
    }
    const body = (await resp.json()) as { version: string };
    return body.version;
  }

  /**
   * Augment one batch. `config` is the augment-section JSON text (or an
   * already-parsed object); `seed` may be a bigint for full u64 range.
   */
  async boundAugment(
    data: Float32Array,
    shape: BatchShape,
    config: string | object = "{}",
    seed: number | bigint = 0,
    reps?: number,
  ): Promise<AugmentResult> {
    if (shape.length !== 4) {
      throw new Error(`shape must be [N, C, H, W], got ${JSON.stringify(shape)}`);
    }
    if (prod(shape) !== data.length) {
      throw new Error(
        `shape ${JSON.stringify(shape)} requires ${prod(shape)} values, got ${data.length}`,
      );
    }
    const configText = typeof config === "string" ? config : JSON.stringify(config);
    let parsedConfig: unknown;
    try {
      parsedConfig = JSON.parse(configText);
    } catch (e) {
      throw new Error(`config is not valid JSON: ${(e as Error).message}`);
    }
    if (parsedConfig === null || typeof parsedConfig !== "object" || Array.isArray(parsedConfig)) {
      throw new Error("config must be a JSON object");
    }
    const dataB64 = Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64");
    // Assemble the body by hand so a bigint seed keeps full precision.
    const body =
      `{"shape":${JSON.stringify(shape)},"data_b64":${JSON.stringify(dataB64)},` +
      `"config":${JSON.stringify(parsedConfig)},"seed":${seed.toString()},` +
      `"reps":${reps === undefined ? "null" : String(reps)}}`;
    const resp = await fetch(`${this.baseUrl}/augment`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body,
    });
    if (!resp.ok) {
      throw new Error(await errorDetail(resp));
    }
    const parsed = (await resp.json()) as AugmentResponseBody;
    const raw = Buffer.from(parsed.data_b64, "base64");
    const out = new Float32Array(raw.length / 4);
    for (let i = 0; i < out.length; i++) {
      out[i] = raw.readFloatLE(4 * i);
    }
    return {
      data: out,
      shape: parsed.shape as BatchShape,
      lUsed: parsed.l_used,
    };
  }
}

export { readTensorDump, writeTensorDump, PRCT_VERSION } from "./tensordump.js";
