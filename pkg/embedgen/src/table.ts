import { writeFileSync } from "node:fs";

/**
 * Embedding-table text format: a `#dim=<d>` header line, then one
 * `id<TAB>v1 v2 ... v_d` row per question. toExponential has an exact
 * ECMAScript definition, so formatting is platform-independent.
 */
export function formatTable(dim: number, rows: Iterable<[string, ArrayLike<number>]>): string {
  const lines = [`#dim=${dim}`];
  for (const [id, values] of rows) {
    if (values.length !== dim) {
      throw new Error(`row ${id} has ${values.length} values, expected ${dim}`);
    }
    const parts = new Array<string>(values.length);
    for (let i = 0; i < values.length; i++) parts[i] = values[i].toExponential(8);
    lines.push(`${id}\t${parts.join(" ")}`);
  }
  return lines.join("\n") + "\n";
}

export function writeTable(path: string, dim: number,
                           rows: Iterable<[string, ArrayLike<number>]>): void {
  writeFileSync(path, formatTable(dim, rows), "utf-8");
}
