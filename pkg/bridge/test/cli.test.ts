import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { main } from "../src/main";
import { parseBinary, parseText } from "../src/pvec";

let dir: string;
let logs: string[];

beforeEach(() => {
  dir = mkdtempSync(join(tmpdir(), "pvec-export-"));
  logs = [];
});

afterEach(() => {
  rmSync(dir, { recursive: true, force: true });
});

const log = (line: string) => logs.push(line);

function vocabFile(content: string): string {
  const path = join(dir, "vocab.txt");
  writeFileSync(path, content, "utf-8");
  return path;
}

function exportArgs(vocab: string, extra: string[] = []): string[] {
  return [
    "export",
    "--model", "hash16",
    "--vocab", vocab,
    "--out", join(dir, "out.pvec"),
    ...extra,
  ];
}

describe("export command", () => {
  it("writes a text pvec that parses with matching shape", () => {
    const code = main(exportArgs(vocabFile("red fox\nnorthern lights\nowl\n")), log);
    expect(code).toBe(0);
    const { rows, dim } = parseText(readFileSync(join(dir, "out.pvec"), "utf-8"));
    expect(rows.map((r) => r.surface)).toEqual(["red fox", "northern lights", "owl"]);
    expect(dim).toBe(16);
    expect(logs.at(-1)).toMatch(/wrote 3 rows \(dim 16\)/);
  });

  it("is byte-identical across reruns, text and binary", () => {
    const vocab = vocabFile("red fox\nowl\n");
    for (const extra of [[], ["--binary"]]) {
      main(exportArgs(vocab, extra), log);
      const first = readFileSync(join(dir, "out.pvec"));
      main(exportArgs(vocab, extra), log);
      expect(readFileSync(join(dir, "out.pvec")).equals(first)).toBe(true);
    }
  });

  it("emits the binary layout under --binary", () => {
    main(exportArgs(vocabFile("red fox\nowl\n"), ["--binary"]), log);
    const { rows, dim } = parseBinary(readFileSync(join(dir, "out.pvec")));
    expect(rows.length).toBe(2);
    expect(dim).toBe(16);
  });

  it("skips and logs lines that tokenize to nothing", () => {
    const code = main(exportArgs(vocabFile("red fox\n   \nowl\n")), log);
    expect(code).toBe(0);
    expect(logs.some((l) => l.includes("tokenizes to nothing"))).toBe(true);
    const { rows } = parseText(readFileSync(join(dir, "out.pvec"), "utf-8"));
    expect(rows.map((r) => r.surface)).toEqual(["red fox", "owl"]);
    expect(logs.at(-1)).toMatch(/1 skipped/);
  });

  it("keeps vocab order in the output", () => {
    main(exportArgs(vocabFile("zebra\napple\nmid point\n")), log);
    const { rows } = parseText(readFileSync(join(dir, "out.pvec"), "utf-8"));
    expect(rows.map((r) => r.surface)).toEqual(["zebra", "apple", "mid point"]);
  });

  it("single-token vocab exports identically under both pooling modes", () => {
    const vocab = vocabFile("owl\nfern\nbirch\n");
    main(exportArgs(vocab, ["--pool", "mean"]), log);
    const mean = readFileSync(join(dir, "out.pvec"), "utf-8");
    main(exportArgs(vocab, ["--pool", "first-token"]), log);
    expect(readFileSync(join(dir, "out.pvec"), "utf-8")).toBe(mean);
  });
});

describe("failure modes", () => {
  it("usage: no subcommand, unknown subcommand, missing flags", () => {
    expect(main([], log)).toBe(1);
    expect(main(["import"], log)).toBe(1);
    expect(main(["export", "--model", "hash16"], log)).toBe(1);
    expect(logs.some((l) => l.includes("--vocab is required"))).toBe(true);
  });

  it("usage: unknown model names the builtins", () => {
    const code = main(exportArgs(vocabFile("owl\n")).map((a) => (a === "hash16" ? "bert" : a)), log);
    expect(code).toBe(1);
    expect(logs.some((l) => l.includes("hash16"))).toBe(true);
  });

  it("usage: bad pooling mode", () => {
    expect(main(exportArgs(vocabFile("owl\n"), ["--pool", "max"]), log)).toBe(1);
  });

  it("data: missing vocab file", () => {
    const code = main(exportArgs(join(dir, "absent.txt")), log);
    expect(code).toBe(2);
    expect(logs.some((l) => l.startsWith("data error"))).toBe(true);
  });

  it("data: empty vocab", () => {
    expect(main(exportArgs(vocabFile("")), log)).toBe(2);
    expect(main(exportArgs(vocabFile("\n\n")), log)).toBe(2);
  });

  it("data: duplicate surface forms", () => {
    const code = main(exportArgs(vocabFile("owl\nred fox\nowl\n")), log);
    expect(code).toBe(2);
    expect(logs.some((l) => l.includes("duplicate"))).toBe(true);
  });

  it("data: nothing left after skips", () => {
    const code = main(exportArgs(vocabFile("   \n\t\n")), log);
    expect(code).toBe(2);
    expect(logs.some((l) => l.includes("nothing to export"))).toBe(true);
  });
});
