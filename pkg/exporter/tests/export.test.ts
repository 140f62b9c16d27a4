import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterEach, describe, expect, it } from "vitest";

import { exportStore, isExcluded, stripKey } from "../src/export.js";
import {
  TensorMap, buildSafetensors, parseSafetensors, toFloat32,
  writeSafetensors,
} from "../src/safetensors.js";
import { verifyExport } from "../src/verify.js";

const cleanups: string[] = [];
afterEach(() => {
  while (cleanups.length) rmSync(cleanups.pop()!, { recursive: true, force: true });
});

function tmp(): string {
  const dir = mkdtempSync(join(tmpdir(), "tsx-"));
  cleanups.push(dir);
  return dir;
}

function f32(values: number[], shape?: number[]) {
  const arr = new Float32Array(values);
  return {
    dtype: "F32" as const,
    shape: shape ?? [values.length],
    data: new Uint8Array(arr.buffer.slice(0)),
  };
}

function i64(values: number[]) {
  const arr = new BigInt64Array(values.map(BigInt));
  return {
    dtype: "I64" as const,
    shape: [values.length],
    data: new Uint8Array(arr.buffer.slice(0)),
  };
}

describe("safetensors", () => {
  it("round-trips tensors bit for bit", () => {
    const tensors: TensorMap = new Map([
      ["a", f32([1, 2, 3], [3])],
      ["b", f32([4.5, -6.25], [2, 1])],
    ]);
    const back = parseSafetensors(buildSafetensors(tensors));
    expect([...back.keys()]).toEqual(["a", "b"]);
    expect(Array.from(toFloat32(back.get("a")!, "a"))).toEqual([1, 2, 3]);
    expect(Array.from(toFloat32(back.get("b")!, "b"))).toEqual([4.5, -6.25]);
  });

  it("decodes f16 and bf16 to f32", () => {
    // 1.5 in f16 is 0x3e00; 1.5 in bf16 is 0x3fc0
    const half = new Uint8Array([0x00, 0x3e]);
    const bf = new Uint8Array([0xc0, 0x3f]);
    expect(toFloat32({ dtype: "F16", shape: [1], data: half }, "h")[0])
      .toBe(1.5);
    expect(toFloat32({ dtype: "BF16", shape: [1], data: bf }, "b")[0])
      .toBe(1.5);
  });

  it("refuses to cast integer tensors", () => {
    expect(() => toFloat32({ dtype: "I64", shape: [1], data: new Uint8Array(8) }, "mask"))
      .toThrow(/not a floating type/);
  });
});

describe("key normalization", () => {
  it("strips the first matching prefix", () => {
    expect(stripKey("_orig_mod.wte.weight", ["_orig_mod."])).toBe("wte.weight");
    expect(stripKey("wte_b", ["_orig_mod."])).toBe("wte_b");
  });

  it("exclusion patterns are anchored", () => {
    expect(isExcluded("h.0.attn.bias", [".*\\.attn\\.bias"])).toBe(true);
    expect(isExcluded("h.0.attn.bias_extra", [".*\\.attn\\.bias"])).toBe(false);
    expect(isExcluded("lm_head.weight", ["lm_head\\.weight"])).toBe(true);
  });
});

function writeCheckpoint(dir: string, name: string,
                         tensors: Array<[string, ReturnType<typeof f32> | ReturnType<typeof i64>]>) {
  const path = join(dir, name);
  writeSafetensors(path, new Map(tensors) as TensorMap);
  return path;
}

describe("exportStore", () => {
  it("strips prefixes and reconciles mixed checkpoints", () => {
    const dir = tmp();
    const a = writeCheckpoint(dir, "a.safetensors", [
      ["_orig_mod.w", f32([1, 2, 3, 4])],
    ]);
    const b = writeCheckpoint(dir, "b.safetensors", [
      ["w", f32([2, 4, 6, 8])],
    ]);
    const manifest = exportStore({
      inputs: [{ step: 0, path: a }, { step: 200, path: b }],
      stripPrefixes: ["_orig_mod."],
      excludePatterns: [],
      outDir: join(dir, "store"),
    });
    expect(manifest.key_order).toEqual([{ key: "w", offset: 0, length: 4 }]);
    const blob = readFileSync(join(dir, "store", "step_200.bin"));
    expect(Array.from(new Float32Array(blob.buffer, blob.byteOffset, 4)))
      .toEqual([2, 4, 6, 8]);
  });

  it("drops excluded keys from the blob and the count", () => {
    const dir = tmp();
    const mk = (name: string) => writeCheckpoint(dir, name, [
      ["h.0.attn.bias", f32([9, 9, 9, 9, 9])],
      ["h.0.attn.weight", f32([1, 2, 3])],
      ["lm_head.weight", f32([7, 7])],
    ]);
    const manifest = exportStore({
      inputs: [
        { step: 0, path: mk("c0.safetensors") },
        { step: 1, path: mk("c1.safetensors") },
      ],
      stripPrefixes: [],
      excludePatterns: [".*\\.attn\\.bias", "lm_head\\.weight"],
      outDir: join(dir, "store"),
    });
    expect(manifest.steps[0].param_count).toBe(3);
    expect(manifest.key_order.map((k) => k.key)).toEqual(["h.0.attn.weight"]);
  });

  it("sorts keys lexicographically after stripping", () => {
    const dir = tmp();
    const mk = (name: string) => writeCheckpoint(dir, name, [
      ["zz.late", f32([5])],
      ["_orig_mod.aa.early", f32([1, 2])],
    ]);
    const manifest = exportStore({
      inputs: [
        { step: 0, path: mk("s0.safetensors") },
        { step: 1, path: mk("s1.safetensors") },
      ],
      stripPrefixes: ["_orig_mod."],
      excludePatterns: [],
      outDir: join(dir, "store"),
    });
    expect(manifest.key_order.map((k) => k.key)).toEqual(["aa.early", "zz.late"]);
    const blob = readFileSync(join(dir, "store", "step_0.bin"));
    expect(Array.from(new Float32Array(blob.buffer, blob.byteOffset, 3))).toEqual([1, 2, 5]);
  });

  it("fails on inconsistent key sets, listing the difference", () => {
    const dir = tmp();
    const a = writeCheckpoint(dir, "a.safetensors", [["x", f32([1])]]);
    const b = writeCheckpoint(dir, "b.safetensors", [
      ["x", f32([1])], ["extra", f32([2])],
    ]);
    expect(() => exportStore({
      inputs: [{ step: 0, path: a }, { step: 1, path: b }],
      stripPrefixes: [],
      excludePatterns: [],
      outDir: join(dir, "store"),
    })).toThrow(/extra/);
  });

  it("fails on unexcluded non-float tensors", () => {
    const dir = tmp();
    const mk = (name: string) => writeCheckpoint(dir, name, [
      ["w", f32([1, 2])],
      ["attn.bias_mask", i64([1, 0, 1])],
    ]);
    expect(() => exportStore({
      inputs: [
        { step: 0, path: mk("m0.safetensors") },
        { step: 1, path: mk("m1.safetensors") },
      ],
      stripPrefixes: [],
      excludePatterns: [],
      outDir: join(dir, "store"),
    })).toThrow(/non-floating/);
    // excluding it lets the export proceed
    const manifest = exportStore({
      inputs: [
        { step: 0, path: mk("n0.safetensors") },
        { step: 1, path: mk("n1.safetensors") },
      ],
      stripPrefixes: [],
      excludePatterns: ["attn\\.bias_mask"],
      outDir: join(dir, "store2"),
    });
    expect(manifest.steps[0].param_count).toBe(2);
  });

  it("fails on duplicate keys after stripping", () => {
    const dir = tmp();
    const mk = (name: string) => writeCheckpoint(dir, name, [
      ["_orig_mod.w", f32([1])],
      ["w", f32([2])],
    ]);
    expect(() => exportStore({
      inputs: [
        { step: 0, path: mk("d0.safetensors") },
        { step: 1, path: mk("d1.safetensors") },
      ],
      stripPrefixes: ["_orig_mod."],
      excludePatterns: [],
      outDir: join(dir, "store"),
    })).toThrow(/collide/);
  });

  it("is deterministic: re-export is byte-identical", () => {
    const dir = tmp();
    const mk = (name: string) => writeCheckpoint(dir, name, [
      ["b", f32([0.25, -0.5])], ["a", f32([1e-7, 3.25, 9])],
    ]);
    const inputs = [
      { step: 0, path: mk("r0.safetensors") },
      { step: 100, path: mk("r1.safetensors") },
    ];
    const cfg = { inputs, stripPrefixes: [], excludePatterns: [] };
    exportStore({ ...cfg, outDir: join(dir, "s1") });
    exportStore({ ...cfg, outDir: join(dir, "s2") });
    for (const name of ["manifest.json", "step_0.bin", "step_100.bin"]) {
      expect(readFileSync(join(dir, "s1", name)))
        .toEqual(readFileSync(join(dir, "s2", name)));
    }
  });
});

describe("verifyExport", () => {
  function makeStore(dir: string) {
    const mk = (name: string, scale: number) => writeCheckpoint(dir, name, [
      ["w1", f32([1 * scale, 2 * scale, 3 * scale], [3])],
      ["w2", f32([4 * scale, 5 * scale], [2])],
    ]);
    const inputs = [
      { step: 0, path: mk("v0.safetensors", 1) },
      { step: 1, path: mk("v1.safetensors", 2) },
    ];
    exportStore({
      inputs, stripPrefixes: [], excludePatterns: [],
      outDir: join(dir, "store"),
    });
    return inputs;
  }

  it("reports all-zero diffs for an intact export", () => {
    const dir = tmp();
    const inputs = makeStore(dir);
    const report = verifyExport(join(dir, "store"), inputs, ["w1", "w2"]);
    expect(report.ok).toBe(true);
    expect(report.checks.every((c) => c.maxAbsDiff === 0)).toBe(true);
  });

  it("flags a corrupted blob with key and offset", () => {
    const dir = tmp();
    const inputs = makeStore(dir);
    const blobPath = join(dir, "store", "step_1.bin");
    const blob = readFileSync(blobPath);
    const view = new Float32Array(blob.buffer, blob.byteOffset, 5);
    view[3] += 1.0; // first element of w2
    writeFileSync(blobPath, blob);
    const report = verifyExport(join(dir, "store"), inputs, ["w1", "w2"]);
    expect(report.ok).toBe(false);
    const bad = report.checks.find((c) => c.key === "w2" && c.step === 1)!;
    expect(bad.maxAbsDiff).toBeGreaterThan(0);
    expect(bad.firstBadOffset).toBe(3);
  });

  it("empty sample list passes with a warning", () => {
    const dir = tmp();
    makeStore(dir);
    const report = verifyExport(join(dir, "store"), [], []);
    expect(report.ok).toBe(true);
    expect(report.warning).toMatch(/nothing was compared/);
  });
});
