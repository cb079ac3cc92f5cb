/**
 * PRCT tensor dump codec, mirroring the Python side byte for byte.
 *
 * Layout (little-endian): magic "PRCT", u16 version (1), u16 rank,
 * rank x u32 dims, then the payload as row-major little-endian float32.
 */

const MAGIC = Buffer.from("PRCT", "ascii");
export const PRCT_VERSION = 1;

export interface TensorDump {
  dims: number[];
  data: Float32Array;
}

export function writeTensorDump(dims: number[], data: Float32Array): Buffer {
  const count = dims.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`dims ${JSON.stringify(dims)} require ${count} values, got ${data.length}`);
  }
  const header = Buffer.alloc(8 + 4 * dims.length);
  MAGIC.copy(header, 0);
  header.writeUInt16LE(PRCT_VERSION, 4);
  header.writeUInt16LE(dims.length, 6);
  dims.forEach((d, i) => header.writeUInt32LE(d, 8 + 4 * i));
  const payload = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export function readTensorDump(buf: Buffer): TensorDump {
  if (buf.length < 8 || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error("not a PRCT stream");
  }
  const version = buf.readUInt16LE(4);
  if (version !== PRCT_VERSION) {
    throw new Error(`unsupported PRCT version ${version}`);
  }
  const rank = buf.readUInt16LE(6);
  const headerLen = 8 + 4 * rank;
  if (buf.length < headerLen) {
    throw new Error("truncated PRCT header");
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(8 + 4 * i));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  const payload = buf.subarray(headerLen);
  if (payload.length !== count * 4) {
    throw new Error(`payload is ${payload.length} bytes, dims need ${count * 4}`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = payload.readFloatLE(4 * i);
  }
  return { dims, data };
}
