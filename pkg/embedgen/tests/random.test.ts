import { describe, expect, test } from "vitest";

import { randomUnitVector } from "../src/random.js";

describe("randomUnitVector", () => {
  test("deterministic for identical (seed, id)", () => {
    const a = randomUnitVector(7, "q1");
    const b = randomUnitVector(7, "q1");
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  test("unit norm within 1e-6", () => {
    for (const id of ["q1", "q2", "long-identifier-with-text"]) {
      const v = randomUnitVector(3, id);
      let sumsq = 0;
      for (const x of v) sumsq += x * x;
      expect(Math.abs(Math.sqrt(sumsq) - 1)).toBeLessThan(1e-6);
    }
  });

  test("seed changes the vector", () => {
    const a = randomUnitVector(1, "q1");
    const b = randomUnitVector(2, "q1");
    expect(Array.from(a)).not.toEqual(Array.from(b));
  });

  test("no collisions over 10k ids", () => {
    const seen = new Set<string>();
    for (let i = 0; i < 10_000; i++) {
      const v = randomUnitVector(0, `q${i}`, 16);
      seen.add(Array.from(v, (x) => x.toExponential(8)).join(","));
    }
    expect(seen.size).toBe(10_000);
  });

  test("requested dimension respected", () => {
    expect(randomUnitVector(0, "q", 512).length).toBe(512);
    expect(randomUnitVector(0, "q", 7).length).toBe(7);
  });
});
