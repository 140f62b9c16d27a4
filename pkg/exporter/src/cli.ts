#!/usr/bin/env node
/**
 * trajspec-export: framework checkpoints -> canonical trajspec store.
 *
 *   trajspec-export export --steps 0,200,400 \
 *       --in ckpt_0.safetensors --in ckpt_200.safetensors --in ckpt_400.safetensors \
 *       --strip _orig_mod. --exclude '.*\.attn\.bias' --exclude 'lm_head\.weight' \
 *       --out store/
 *
 *   trajspec-export verify --store store/ --steps 0,200 \
 *       --in ckpt_0.safetensors --in ckpt_200.safetensors --sample wte.weight
 */

import { exportStore, stableJson } from "./export.js";
import { verifyExport } from "./verify.js";
import { parseArgs } from "node:util";

function parseSteps(raw: string | undefined, count: number): number[] {
  if (!raw) throw new Error("--steps is required (comma-separated list)");
  const steps = raw.split(",").map((s) => {
    const v = Number(s.trim());
    if (!Number.isInteger(v)) throw new Error(`bad step value: ${s}`);
    return v;
  });
  if (steps.length !== count) {
    throw new Error(
      `--steps lists ${steps.length} entries but --in was given ${count} times`,
    );
  }
  return steps;
}

export function main(argv: string[]): number {
  const command = argv[0];
  const rest = argv.slice(1);
  try {
    if (command === "export") {
      const { values } = parseArgs({
        args: rest,
        options: {
          steps: { type: "string" },
          in: { type: "string", multiple: true },
          strip: { type: "string", multiple: true },
          exclude: { type: "string", multiple: true },
          out: { type: "string" },
        },
      });
      const inputs = values.in ?? [];
      if (!values.out) throw new Error("--out is required");
      const steps = parseSteps(values.steps, inputs.length);
      const manifest = exportStore({
        inputs: steps.map((step, i) => ({ step, path: inputs[i] })),
        stripPrefixes: values.strip ?? [],
        excludePatterns: values.exclude ?? [],
        outDir: values.out,
      });
      console.error(
        `exported ${manifest.steps.length} checkpoints, p=` +
        `${manifest.steps[0].param_count}, ${manifest.key_order.length} keys`,
      );
      return 0;
    }
    if (command === "verify") {
      const { values } = parseArgs({
        args: rest,
        options: {
          store: { type: "string" },
          steps: { type: "string" },
          in: { type: "string", multiple: true },
          sample: { type: "string", multiple: true },
        },
      });
      const inputs = values.in ?? [];
      if (!values.store) throw new Error("--store is required");
      const steps = parseSteps(values.steps, inputs.length);
      const report = verifyExport(
        values.store,
        steps.map((step, i) => ({ step, path: inputs[i] })),
        values.sample ?? [],
      );
      console.log(stableJson(report));
      if (report.warning) console.error(`warning: ${report.warning}`);
      if (!report.ok) {
        console.error("verification FAILED: nonzero diffs found");
        return 1;
      }
      return 0;
    }
    console.error(
      "usage: trajspec-export <export|verify> ...  (see source header)",
    );
    return 2;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

import { fileURLToPath } from "node:url";
if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  process.exit(main(process.argv.slice(2)));
}
