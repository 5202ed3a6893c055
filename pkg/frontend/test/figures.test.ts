import * as fs from "fs";
import * as path from "path";

import { describe, expect, it } from "vitest";

import { SchemaError } from "../src/csv";
import { FIGURE_IDS, inputTableFor, renderFigure } from "../src/figures";

const FIXTURES = path.join(__dirname, "..", "fixtures");

function fixtureFor(id: (typeof FIGURE_IDS)[number]): string | undefined {
  const table = inputTableFor(id);
  if (table === null) return undefined;
  return fs.readFileSync(path.join(FIXTURES, `${table}.csv`), "utf8");
}

describe("figure rendering from committed fixtures", () => {
  for (const id of FIGURE_IDS) {
    it(`renders ${id}`, () => {
      const doc = renderFigure(id, fixtureFor(id));
      expect(doc.startsWith("<svg")).toBe(true);
      expect(doc).toContain("</svg>");
      expect(doc).toMatch(/polyline|circle|path/);
      // every figure draws labelled axes
      expect(doc).toContain("<text");
    });
  }

  it("is deterministic: re-rendering yields identical output", () => {
    for (const id of FIGURE_IDS) {
      const a = renderFigure(id, fixtureFor(id));
      const b = renderFigure(id, fixtureFor(id));
      expect(a).toBe(b);
    }
  });

  it("marks the vacuity threshold on the toy figure", () => {
    const doc = renderFigure("fig1-toy-bounds", fixtureFor("fig1-toy-bounds"));
    expect(doc).toContain("stroke-dasharray");
  });

  it("uses dashed lines for test error and solid for bounds", () => {
    const doc = renderFigure("fig4-bound-sweep", fixtureFor("fig4-bound-sweep"));
    const dashed = doc.match(/stroke-dasharray="6,4"/g) ?? [];
    expect(dashed.length).toBeGreaterThan(0);
  });

  it("shades +-2 std seed bands", () => {
    const doc = renderFigure("fig3-l2", fixtureFor("fig3-l2"));
    expect(doc).toContain("fill-opacity");
  });

  it("renders a single-alpha table without crashing", () => {
    const single =
      "alpha,seed,epsilon,sigma_p,t,kl,gibbs_risk,bound,test_error\n" +
      "0.5,0,0.05,0.01,4,12.0,0.05,0.21,0.08\n";
    const doc = renderFigure("fig4-bound-sweep", single);
    expect(doc).toContain("</svg>");
  });

  it("raises a schema error on empty input", () => {
    expect(() => renderFigure("fig4-bound-sweep", "")).toThrow(SchemaError);
  });

  it("raises a schema error naming a missing column", () => {
    expect(() => renderFigure("fig3-l2", "alpha,seed,d_prefix\n0,1,0.5\n")).toThrow(/d_ghost/);
  });

  it("requires inputs for csv-backed figures", () => {
    expect(() => renderFigure("fig5-direct-opt")).toThrow(/needs an input/);
  });
});
