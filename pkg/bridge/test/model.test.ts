import { describe, expect, it } from "vitest";

import {
  FrozenEncoder,
  loadModel,
  modelNames,
  pool,
  tokenize,
  type EncodeResult,
} from "../src/model";

describe("tokenize", () => {
  it("lowercases and splits on any whitespace", () => {
    expect(tokenize("  Red   FOX\tcub ")).toEqual(["red", "fox", "cub"]);
  });

  it("yields nothing for blank input", () => {
    expect(tokenize("   ")).toEqual([]);
    expect(tokenize("")).toEqual([]);
  });
});

describe("registry", () => {
  it("lists the builtin models", () => {
    expect(modelNames()).toContain("hash16");
    expect(modelNames()).toContain("hash32");
  });

  it("loads models at their stated width", () => {
    expect(loadModel("hash16").dim).toBe(16);
    expect(loadModel("hash32").dim).toBe(32);
  });

  it("rejects unknown names and says what exists", () => {
    expect(() => loadModel("bert-base")).toThrow(/hash16/);
  });
});

describe("frozen encoding", () => {
  it("is exactly reproducible across instances", () => {
    const a = loadModel("hash16");
    const b = loadModel("hash16");
    for (const surface of ["red fox", "a", "three word phrase"]) {
      const va = pool(a.encode(surface)!, "mean");
      const vb = pool(b.encode(surface)!, "mean");
      expect(Array.from(va)).toEqual(Array.from(vb));
    }
  });

  it("differs between models and between surfaces", () => {
    const m16 = loadModel("hash16");
    const other = new FrozenEncoder("other", 16, 2);
    const x = pool(m16.encode("red fox")!, "mean");
    expect(Array.from(x)).not.toEqual(Array.from(pool(other.encode("red fox")!, "mean")));
    expect(Array.from(x)).not.toEqual(Array.from(pool(m16.encode("red wolf")!, "mean")));
  });

  it("produces finite vectors of the model width", () => {
    const enc = loadModel("hash32");
    for (const surface of ["one", "two tokens", "a much longer surface form here"]) {
      const vec = pool(enc.encode(surface)!, "mean");
      expect(vec.length).toBe(32);
      for (const v of vec) {
        expect(Number.isFinite(v)).toBe(true);
      }
    }
  });

  it("returns null when nothing tokenizes", () => {
    const enc = loadModel("hash16");
    expect(enc.encode("   ")).toBeNull();
    expect(enc.encode("")).toBeNull();
  });

  it("wraps the phrase in delimiters and flags exactly those", () => {
    const result = loadModel("hash16").encode("red fox")!;
    expect(result.tokens).toEqual(["red", "fox"]);
    expect(result.states.length).toBe(4);
    expect(result.special).toEqual([true, false, false, true]);
  });

  it("encoding is case-insensitive via the tokenizer", () => {
    const enc = loadModel("hash16");
    const lower = pool(enc.encode("red fox")!, "mean");
    const upper = pool(enc.encode("RED Fox")!, "mean");
    expect(Array.from(lower)).toEqual(Array.from(upper));
  });
});

describe("pooling", () => {
  function fake(states: number[][], special: boolean[]): EncodeResult {
    return {
      states: states.map((s) => Float64Array.from(s)),
      special,
      tokens: [],
    };
  }

  it("means only the non-delimiter positions", () => {
    const result = fake(
      [
        [100, 100], // delimiter, must not leak into the mean
        [1, 2],
        [3, 6],
        [100, 100],
      ],
      [true, false, false, true],
    );
    expect(Array.from(pool(result, "mean"))).toEqual([2, 4]);
  });

  it("first-token takes the first content position, not the delimiter", () => {
    const result = fake([[9, 9], [1, 2], [3, 4]], [true, false, false]);
    expect(Array.from(pool(result, "first-token"))).toEqual([1, 2]);
  });

  it("agrees between modes for a single content token", () => {
    const enc = loadModel("hash16");
    const result = enc.encode("owl")!;
    expect(Array.from(pool(result, "mean"))).toEqual(
      Array.from(pool(result, "first-token")),
    );
  });

  it("modes differ on a multi-token phrase", () => {
    const enc = loadModel("hash16");
    const result = enc.encode("red fox")!;
    expect(Array.from(pool(result, "mean"))).not.toEqual(
      Array.from(pool(result, "first-token")),
    );
  });

  it("refuses an all-delimiter input", () => {
    expect(() => pool(fake([[1]], [true]), "mean")).toThrow(/nothing to pool/);
  });
});
