/**
 * Phrase-vector file formats.
 *
 * Text: first line `<count> <dim>`, then one row per line as
 * `<surface>\t<v1> <v2> ...` with LF endings. Values print in the
 * shortest form that round-trips a double.
 *
 * Binary: magic "PVB1", little-endian u32 count and dim, then per row a
 * u16 byte length, the UTF-8 surface, and dim little-endian f32 values.
 *
 * Writers enforce the grammar invariants (unique non-empty surfaces, no
 * tabs or newlines inside a surface, constant dimension, finite values)
 * so any produced file loads back unchanged.
 */

export interface VectorRow {
  surface: string;
  values: Float64Array;
}

export const BINARY_MAGIC = "PVB1";

export class PvecError extends Error {}

export function validateRows(rows: VectorRow[], dim: number): void {
  const seen = new Set<string>();
  for (const row of rows) {
    if (row.surface.length === 0) {
      throw new PvecError("surface forms must be non-empty");
    }
    if (/[\t\n\r]/.test(row.surface)) {
      throw new PvecError(
        `surface form contains tab or newline: ${JSON.stringify(row.surface)}`,
      );
    }
    if (seen.has(row.surface)) {
      throw new PvecError(`duplicate surface form: ${JSON.stringify(row.surface)}`);
    }
    seen.add(row.surface);
    if (row.values.length !== dim) {
      throw new PvecError(
        `row ${JSON.stringify(row.surface)} has ${row.values.length} values, expected ${dim}`,
      );
    }
    for (const v of row.values) {
      if (!Number.isFinite(v)) {
        throw new PvecError(
          `row ${JSON.stringify(row.surface)} holds a non-finite value`,
        );
      }
    }
  }
}

// String(-0) is "0"; the text format promises lossless doubles, sign of
// zero included, so negative zero is spelled out.
function formatValue(v: number): string {
  return Object.is(v, -0) ? "-0" : String(v);
}

export function formatText(rows: VectorRow[], dim: number): string {
  validateRows(rows, dim);
  const lines = [`${rows.length} ${dim}`];
  for (const row of rows) {
    lines.push(`${row.surface}\t${Array.from(row.values, formatValue).join(" ")}`);
  }
  return lines.join("\n") + "\n";
}

export function formatBinary(rows: VectorRow[], dim: number): Buffer {
  validateRows(rows, dim);
  const encoder = new TextEncoder();
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(12);
  header.write(BINARY_MAGIC, 0, "ascii");
  header.writeUInt32LE(rows.length, 4);
  header.writeUInt32LE(dim, 8);
  chunks.push(header);
  for (const row of rows) {
    const surface = encoder.encode(row.surface);
    if (surface.length > 0xffff) {
      throw new PvecError(`surface form longer than 65535 bytes: ${row.surface.slice(0, 40)}...`);
    }
    const chunk = Buffer.alloc(2 + surface.length + 4 * dim);
    chunk.writeUInt16LE(surface.length, 0);
    chunk.set(surface, 2);
    for (let i = 0; i < dim; i += 1) {
      chunk.writeFloatLE(Math.fround(row.values[i]!), 2 + surface.length + 4 * i);
    }
    chunks.push(chunk);
  }
  return Buffer.concat(chunks);
}

export function parseText(content: string): { rows: VectorRow[]; dim: number } {
  const lines = content.split("\n");
  if (lines[lines.length - 1] === "") {
    lines.pop();
  }
  const header = lines[0];
  if (header === undefined) {
    throw new PvecError("empty file");
  }
  const m = /^(\d+) (\d+)$/.exec(header);
  if (!m) {
    throw new PvecError(`line 1: expected "<count> <dim>", got ${JSON.stringify(header)}`);
  }
  const count = Number(m[1]);
  const dim = Number(m[2]);
  if (lines.length - 1 !== count) {
    throw new PvecError(`header says ${count} rows, file has ${lines.length - 1}`);
  }
  const rows: VectorRow[] = [];
  for (let i = 1; i < lines.length; i += 1) {
    const line = lines[i]!;
    const tab = line.indexOf("\t");
    if (tab < 0) {
      throw new PvecError(`line ${i + 1}: missing tab separator`);
    }
    const surface = line.slice(0, tab);
    const parts = line.slice(tab + 1).split(" ");
    if (parts.length !== dim) {
      throw new PvecError(`line ${i + 1}: ${parts.length} values, expected ${dim}`);
    }
    const values = new Float64Array(dim);
    for (let j = 0; j < dim; j += 1) {
      const v = Number(parts[j]);
      if (parts[j] === "" || Number.isNaN(v)) {
        throw new PvecError(`line ${i + 1}: bad value ${JSON.stringify(parts[j])}`);
      }
      values[j] = v;
    }
    rows.push({ surface, values });
  }
  validateRows(rows, dim);
  return { rows, dim };
}

export function parseBinary(buf: Buffer): { rows: VectorRow[]; dim: number } {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== BINARY_MAGIC) {
    throw new PvecError("not a pvec binary file (bad magic)");
  }
  const count = buf.readUInt32LE(4);
  const dim = buf.readUInt32LE(8);
  const rows: VectorRow[] = [];
  let at = 12;
  for (let r = 0; r < count; r += 1) {
    if (at + 2 > buf.length) {
      throw new PvecError(`truncated at row ${r}`);
    }
    const len = buf.readUInt16LE(at);
    at += 2;
    if (at + len + 4 * dim > buf.length) {
      throw new PvecError(`truncated at row ${r}`);
    }
    const surface = buf.toString("utf-8", at, at + len);
    at += len;
    const values = new Float64Array(dim);
    for (let j = 0; j < dim; j += 1) {
      values[j] = buf.readFloatLE(at);
      at += 4;
    }
    rows.push({ surface, values });
  }
  if (at !== buf.length) {
    throw new PvecError(`${buf.length - at} trailing bytes after the last row`);
  }
  validateRows(rows, dim);
  return { rows, dim };
}
