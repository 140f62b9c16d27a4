/**
 * Minimal safetensors reader/writer.
 *
 * File layout: a little-endian u64 header length, a JSON header mapping
 * tensor names to {dtype, shape, data_offsets}, then the raw tensor
 * buffer. Offsets are relative to the start of the data section.
 */

import { readFileSync, writeFileSync } from "node:fs";

export type Dtype =
  | "F64" | "F32" | "F16" | "BF16"
  | "I64" | "I32" | "I16" | "I8" | "U8" | "BOOL";

export interface TensorEntry {
  dtype: Dtype;
  shape: number[];
  /** raw little-endian bytes, row-major */
  data: Uint8Array;
}

export type TensorMap = Map<string, TensorEntry>;

const DTYPE_SIZE: Record<Dtype, number> = {
  F64: 8, F32: 4, F16: 2, BF16: 2,
  I64: 8, I32: 4, I16: 2, I8: 1, U8: 1, BOOL: 1,
};

export const FLOAT_DTYPES: ReadonlySet<string> =
  new Set(["F64", "F32", "F16", "BF16"]);

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function parseSafetensors(buffer: Buffer): TensorMap {
  if (buffer.length < 8) {
    throw new Error("file too short for a safetensors header");
  }
  const headerLen = Number(buffer.readBigUInt64LE(0));
  if (8 + headerLen > buffer.length) {
    throw new Error("declared header length exceeds the file size");
  }
  const header = JSON.parse(
    buffer.subarray(8, 8 + headerLen).toString("utf8"),
  ) as Record<string, { dtype: Dtype; shape: number[]; data_offsets: [number, number] }>;
  const dataStart = 8 + headerLen;
  const tensors: TensorMap = new Map();
  for (const [name, entry] of Object.entries(header)) {
    if (name === "__metadata__") continue;
    const { dtype, shape, data_offsets: [lo, hi] } = entry;
    if (!(dtype in DTYPE_SIZE)) {
      throw new Error(`tensor ${name}: unsupported dtype ${dtype}`);
    }
    const expected = elementCount(shape) * DTYPE_SIZE[dtype];
    if (hi - lo !== expected) {
      throw new Error(
        `tensor ${name}: data span ${hi - lo} does not match shape ` +
        `${JSON.stringify(shape)} of dtype ${dtype}`,
      );
    }
    tensors.set(name, {
      dtype,
      shape,
      data: new Uint8Array(buffer.subarray(dataStart + lo, dataStart + hi)),
    });
  }
  return tensors;
}

export function readSafetensors(path: string): TensorMap {
  return parseSafetensors(readFileSync(path));
}

/** Serialize a tensor map (tensor order preserved). */
export function buildSafetensors(tensors: TensorMap): Buffer {
  const header: Record<string, unknown> = {};
  let offset = 0;
  const parts: Uint8Array[] = [];
  for (const [name, t] of tensors) {
    const size = t.data.byteLength;
    header[name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + size],
    };
    parts.push(t.data);
    offset += size;
  }
  const headerBytes = Buffer.from(JSON.stringify(header), "utf8");
  const out = Buffer.alloc(8 + headerBytes.length + offset);
  out.writeBigUInt64LE(BigInt(headerBytes.length), 0);
  headerBytes.copy(out, 8);
  let pos = 8 + headerBytes.length;
  for (const part of parts) {
    out.set(part, pos);
    pos += part.byteLength;
  }
  return out;
}

export function writeSafetensors(path: string, tensors: TensorMap): void {
  writeFileSync(path, buildSafetensors(tensors));
}

function halfToFloat(bits: number): number {
  const sign = (bits & 0x8000) ? -1 : 1;
  const exp = (bits >> 10) & 0x1f;
  const frac = bits & 0x3ff;
  if (exp === 0) return sign * frac * 2 ** -24;
  if (exp === 31) return frac ? NaN : sign * Infinity;
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

/** Decode a float tensor to float32, regardless of its storage dtype. */
export function toFloat32(t: TensorEntry, name: string): Float32Array {
  const n = elementCount(t.shape);
  const view = new DataView(t.data.buffer, t.data.byteOffset, t.data.byteLength);
  const out = new Float32Array(n);
  switch (t.dtype) {
    case "F32":
      for (let i = 0; i < n; i++) out[i] = view.getFloat32(i * 4, true);
      return out;
    case "F64":
      for (let i = 0; i < n; i++) out[i] = view.getFloat64(i * 8, true);
      return out;
    case "F16":
      for (let i = 0; i < n; i++) out[i] = halfToFloat(view.getUint16(i * 2, true));
      return out;
    case "BF16": {
      const scratch = new DataView(new ArrayBuffer(4));
      for (let i = 0; i < n; i++) {
        scratch.setUint32(0, view.getUint16(i * 2, true) << 16, false);
        out[i] = scratch.getFloat32(0, false);
      }
      return out;
    }
    default:
      throw new Error(
        `tensor ${name}: dtype ${t.dtype} is not a floating type; ` +
        `exclude it explicitly (buffers like masks must not be cast)`,
      );
  }
}
