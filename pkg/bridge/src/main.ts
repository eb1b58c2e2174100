#!/usr/bin/env node
/**
 * pvec-export: dump frozen-encoder phrase embeddings to a pvec file.
 *
 *   pvec-export export --model hash16 --vocab phrases.txt --pool mean \
 *       --out phrases.pvec [--binary]
 *
 * The vocab file lists one surface form per line. Each is encoded
 * standalone; rows keep the input order. Lines that tokenize to nothing
 * are skipped and logged. Exit codes: 0 success, 1 usage, 2 data.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { loadModel, modelNames, pool, type Pooling } from "./model.js";
import { formatBinary, formatText, PvecError, type VectorRow } from "./pvec.js";

class UsageError extends Error {}
class DataError extends Error {}

export interface ExportSpec {
  model: string;
  vocabPath: string;
  pooling: Pooling;
  outPath: string;
  binary: boolean;
}

function parseSpec(argv: string[]): ExportSpec {
  if (argv[0] !== "export") {
    throw new UsageError(
      argv.length === 0
        ? "a subcommand is required; the only one is: export"
        : `unknown subcommand ${JSON.stringify(argv[0])}; the only one is: export`,
    );
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        model: { type: "string" },
        vocab: { type: "string" },
        pool: { type: "string", default: "mean" },
        out: { type: "string" },
        binary: { type: "boolean", default: false },
      },
      allowPositionals: false,
    });
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
  const { model, vocab, pool: pooling, out, binary } = parsed.values;
  for (const [flag, value] of [
    ["--model", model],
    ["--vocab", vocab],
    ["--out", out],
  ] as const) {
    if (!value) {
      throw new UsageError(`${flag} is required`);
    }
  }
  if (pooling !== "mean" && pooling !== "first-token") {
    throw new UsageError(
      `--pool must be "mean" or "first-token", got ${JSON.stringify(pooling)}`,
    );
  }
  return {
    model: model!,
    vocabPath: vocab!,
    pooling,
    outPath: out!,
    binary: binary ?? false,
  };
}

function readVocab(path: string): string[] {
  let content: string;
  try {
    content = readFileSync(path, "utf-8");
  } catch (err) {
    throw new DataError(`cannot read vocab file: ${(err as Error).message}`);
  }
  const lines = content.split("\n");
  if (lines[lines.length - 1] === "") {
    lines.pop();
  }
  const surfaces = lines.filter((line) => line !== "");
  if (surfaces.length === 0) {
    throw new DataError(`vocab file ${path} holds no surface forms`);
  }
  const seen = new Set<string>();
  for (const s of surfaces) {
    const trimmed = s.trim();
    if (seen.has(trimmed)) {
      throw new DataError(`duplicate surface form in vocab: ${JSON.stringify(trimmed)}`);
    }
    if (trimmed !== "") {
      seen.add(trimmed);
    }
  }
  return surfaces;
}

export function runExport(spec: ExportSpec, log: (line: string) => void): void {
  let encoder;
  try {
    encoder = loadModel(spec.model);
  } catch (err) {
    throw new UsageError((err as Error).message);
  }
  const surfaces = readVocab(spec.vocabPath);

  const rows: VectorRow[] = [];
  let skipped = 0;
  for (const raw of surfaces) {
    const surface = raw.trim();
    const result = surface === "" ? null : encoder.encode(surface);
    if (result === null) {
      skipped += 1;
      log(`skipped ${JSON.stringify(raw)}: tokenizes to nothing`);
      continue;
    }
    rows.push({ surface, values: pool(result, spec.pooling) });
  }
  if (rows.length === 0) {
    throw new DataError("every vocab line was skipped; nothing to export");
  }

  try {
    if (spec.binary) {
      writeFileSync(spec.outPath, formatBinary(rows, encoder.dim));
    } else {
      writeFileSync(spec.outPath, formatText(rows, encoder.dim), "utf-8");
    }
  } catch (err) {
    if (err instanceof PvecError) {
      throw new DataError(err.message);
    }
    throw err;
  }
  log(
    `wrote ${rows.length} rows (dim ${encoder.dim}` +
      (skipped ? `, ${skipped} skipped` : "") +
      `) to ${spec.outPath}`,
  );
}

export function main(argv: string[], log: (line: string) => void): number {
  try {
    runExport(parseSpec(argv), log);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      log(`usage error: ${err.message}`);
      log(`builtin models: ${modelNames().join(", ")}`);
      return 1;
    }
    if (err instanceof DataError || err instanceof PvecError) {
      log(`data error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2), (line) => console.error(line)));
}
