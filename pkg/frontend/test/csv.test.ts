import { describe, expect, it } from "vitest";

import { aggregate, parseCsv, SchemaError } from "../src/csv";

describe("parseCsv", () => {
  it("parses numbers, strings and nan", () => {
    const t = parseCsv("a,b,c\n1,nan,x\n2.5,3,y\n", ["a", "b"]);
    expect(t.rows).toHaveLength(2);
    expect(t.rows[0].a).toBe(1);
    expect(Number.isNaN(t.rows[0].b as number)).toBe(true);
    expect(t.rows[1].c).toBe("y");
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("", ["a"])).toThrow(SchemaError);
    expect(() => parseCsv("a,b\n", ["a"])).toThrow(/no rows/);
  });

  it("names the missing column", () => {
    expect(() => parseCsv("alpha,seed\n0,1\n", ["alpha", "d_ghost"])).toThrow(/d_ghost/);
  });

  it("rejects ragged rows", () => {
    expect(() => parseCsv("a,b\n1\n", ["a"])).toThrow(/width/);
  });
});

describe("aggregate", () => {
  it("computes group means and sample stds, skipping NaN", () => {
    const t = parseCsv("alpha,v\n0,1\n0,3\n0.5,2\n0.5,nan\n", ["alpha", "v"]);
    const s = aggregate(t, "alpha", "v");
    expect(s.x).toEqual([0, 0.5]);
    expect(s.mean).toEqual([2, 2]);
    expect(s.std[0]).toBeCloseTo(Math.SQRT2, 12);
    expect(s.std[1]).toBe(0);
  });
});
