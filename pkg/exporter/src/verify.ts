/**
 * Spot-check an exported store against its source checkpoints.
 *
 * For each sampled key, the source tensor is re-read, cast to float32,
 * and compared element-wise against the corresponding blob slice. All
 * diffs are expected to be exactly zero (the export path is a cast plus
 * a copy); any nonzero diff is reported with key and offset.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { Manifest, stripKey } from "./export.js";
import { readSafetensors, toFloat32 } from "./safetensors.js";

export interface KeyCheck {
  key: string;
  step: number;
  maxAbsDiff: number;
  firstBadOffset: number | null;
}

export interface VerifyReport {
  checks: KeyCheck[];
  ok: boolean;
  warning?: string;
}

export function readManifest(storeDir: string): Manifest {
  return JSON.parse(
    readFileSync(join(storeDir, "manifest.json"), "utf8"),
  ) as Manifest;
}

export function verifyExport(
  storeDir: string,
  sources: Array<{ step: number; path: string }>,
  sampleKeys: string[],
): VerifyReport {
  const manifest = readManifest(storeDir);
  if (sampleKeys.length === 0) {
    return {
      checks: [],
      ok: true,
      warning: "empty sample list: nothing was compared",
    };
  }
  const prefixes = manifest.filter_record.stripped_prefixes;
  const checks: KeyCheck[] = [];
  for (const { step, path } of sources) {
    const entry = manifest.steps.find((s) => s.step_index === step);
    if (!entry) throw new Error(`step ${step} not present in the manifest`);
    const blob = readFileSync(join(storeDir, entry.blob_path));
    const tensors = readSafetensors(path);
    for (const wanted of sampleKeys) {
      const keyEntry = manifest.key_order.find((k) => k.key === wanted);
      if (!keyEntry) throw new Error(`key ${wanted} not in the manifest`);
      let source: Float32Array | null = null;
      for (const [raw, tensor] of tensors) {
        if (stripKey(raw, prefixes) === wanted) {
          source = toFloat32(tensor, raw);
          break;
        }
      }
      if (source === null) {
        throw new Error(`key ${wanted} not found in source ${path}`);
      }
      const stored = new Float32Array(
        blob.buffer, blob.byteOffset + keyEntry.offset * 4, keyEntry.length,
      );
      let maxDiff = 0;
      let firstBad: number | null = null;
      for (let i = 0; i < keyEntry.length; i++) {
        const diff = Math.abs(stored[i] - source[i]);
        if (diff > maxDiff) maxDiff = diff;
        if (diff !== 0 && firstBad === null) firstBad = keyEntry.offset + i;
      }
      checks.push({ key: wanted, step, maxAbsDiff: maxDiff, firstBadOffset: firstBad });
    }
  }
  return { checks, ok: checks.every((c) => c.maxAbsDiff === 0) };
}
