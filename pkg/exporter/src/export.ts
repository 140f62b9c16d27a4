/**
 * Export framework checkpoints into the canonical trajspec store.
 *
 * Per checkpoint: strip configured prefixes from tensor names, drop
 * excluded keys (anchored regexes evaluated after stripping, before any
 * casting), sort the survivors lexicographically, cast to float32, and
 * concatenate row-major into `step_<N>.bin`. A single manifest.json
 * records step indices, per-blob sha256 checksums, the key table, and
 * the normalization applied, matching the store layout the analysis
 * pipeline reads.
 */

import { createHash } from "node:crypto";
import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import {
  FLOAT_DTYPES, TensorMap, elementCount, readSafetensors, toFloat32,
} from "./safetensors.js";

export interface ExportConfig {
  /** (training step, checkpoint path) pairs; steps strictly increasing */
  inputs: Array<{ step: number; path: string }>;
  stripPrefixes: string[];
  excludePatterns: string[];
  outDir: string;
}

export interface KeyEntry {
  key: string;
  offset: number;
  length: number;
}

export interface Manifest {
  version: string;
  steps: Array<{
    step_index: number;
    blob_path: string;
    param_count: number;
    checksum: string;
  }>;
  key_order: KeyEntry[];
  filter_record: {
    stripped_prefixes: string[];
    excluded_key_patterns: string[];
  };
}

export const STORE_VERSION = "trajspec-store-v1";

export function stripKey(key: string, prefixes: string[]): string {
  for (const prefix of prefixes) {
    if (prefix && key.startsWith(prefix)) return key.slice(prefix.length);
  }
  return key;
}

export function isExcluded(key: string, patterns: string[]): boolean {
  // anchored: the pattern must consume the whole post-strip key
  return patterns.some((p) => new RegExp(`^(?:${p})$`).test(key));
}

interface Retained {
  key: string;
  raw: string;
  dtype: string;
  length: number;
}

function normalizeKeys(
  tensors: TensorMap, config: ExportConfig, step: number,
): Retained[] {
  const kept: Retained[] = [];
  for (const [raw, tensor] of tensors) {
    const key = stripKey(raw, config.stripPrefixes);
    if (isExcluded(key, config.excludePatterns)) continue;
    if (!FLOAT_DTYPES.has(tensor.dtype)) {
      throw new Error(
        `step ${step}: tensor ${raw} has non-floating dtype ` +
        `${tensor.dtype} and no exclusion pattern matches it`,
      );
    }
    kept.push({ key, raw, dtype: tensor.dtype, length: elementCount(tensor.shape) });
  }
  const seen = new Map<string, string>();
  for (const { key, raw } of kept) {
    const prev = seen.get(key);
    if (prev !== undefined) {
      throw new Error(
        `step ${step}: keys ${prev} and ${raw} collide on ${key} after ` +
        `prefix stripping`,
      );
    }
    seen.set(key, raw);
  }
  kept.sort((a, b) => (a.key < b.key ? -1 : a.key > b.key ? 1 : 0));
  return kept;
}

function signature(kept: Retained[]): string {
  return kept.map((k) => `${k.key}:${k.length}`).join("\n");
}

export function exportStore(config: ExportConfig): Manifest {
  if (config.inputs.length < 2) {
    throw new Error(`need at least 2 checkpoints, got ${config.inputs.length}`);
  }
  for (let i = 1; i < config.inputs.length; i++) {
    if (config.inputs[i].step <= config.inputs[i - 1].step) {
      throw new Error("checkpoint steps must be strictly increasing");
    }
  }
  mkdirSync(config.outDir, { recursive: true });

  let canonical: Retained[] | null = null;
  const manifest: Manifest = {
    version: STORE_VERSION,
    steps: [],
    key_order: [],
    filter_record: {
      stripped_prefixes: config.stripPrefixes,
      excluded_key_patterns: config.excludePatterns,
    },
  };

  for (const { step, path } of config.inputs) {
    const tensors = readSafetensors(path);
    const kept = normalizeKeys(tensors, config, step);
    if (canonical === null) {
      canonical = kept;
      let offset = 0;
      for (const k of kept) {
        manifest.key_order.push({ key: k.key, offset, length: k.length });
        offset += k.length;
      }
    } else if (signature(kept) !== signature(canonical)) {
      const ours = new Set(kept.map((k) => k.key));
      const theirs = new Set(canonical.map((k) => k.key));
      const diff = [
        ...[...ours].filter((k) => !theirs.has(k)),
        ...[...theirs].filter((k) => !ours.has(k)),
      ].sort();
      throw new Error(
        `step ${step}: key set differs from the first checkpoint on: ` +
        `${diff.length ? diff.join(", ") : "(same names, different sizes)"}`,
      );
    }

    const paramCount = kept.reduce((a, k) => a + k.length, 0);
    const blob = Buffer.alloc(paramCount * 4);
    let pos = 0;
    for (const k of kept) {
      const values = toFloat32(tensors.get(k.raw)!, k.raw);
      // row-major flatten in the framework's native layout; the
      // analysis is inner-product only, so layout is a free convention
      Buffer.from(values.buffer, values.byteOffset, values.byteLength)
        .copy(blob, pos);
      pos += values.byteLength;
    }
    const blobName = `step_${step}.bin`;
    writeFileSync(join(config.outDir, blobName), blob);
    manifest.steps.push({
      step_index: step,
      blob_path: blobName,
      param_count: paramCount,
      checksum: "sha256:" + createHash("sha256").update(blob).digest("hex"),
    });
  }

  writeFileSync(
    join(config.outDir, "manifest.json"),
    stableJson(manifest) + "\n",
  );
  return manifest;
}

/** Deterministic JSON with sorted keys, so re-exports are byte-identical. */
export function stableJson(value: unknown): string {
  return JSON.stringify(sortDeep(value), null, 1);
}

function sortDeep(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortDeep);
  if (value && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sortDeep((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
