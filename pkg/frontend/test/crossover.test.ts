import * as fs from "fs";
import * as path from "path";

import { describe, expect, it } from "vitest";

import { momentBound, pinskerBound, variationalBound } from "../src/bounds";
import { parseCsv, num } from "../src/csv";

const FIXTURE = path.join(__dirname, "..", "fixtures", "crossover_points.csv");

describe("crossover grid against the bound library", () => {
  it("matches the committed reference values to 1e-9 on shared points", () => {
    // the fixture was emitted by the Python bound library over the same
    // (empirical risk, budget) grid the figure uses
    const table = parseCsv(fs.readFileSync(FIXTURE, "utf8"), [
      "r_hat",
      "b",
      "moment",
      "pinsker",
    ]);
    expect(table.rows.length).toBe(400);
    let worst = 0;
    for (const row of table.rows) {
      const r = num(row, "r_hat");
      const b = num(row, "b");
      const dm = Math.abs(momentBound(r, b) - num(row, "moment"));
      const dp = Math.abs(pinskerBound(r, b) - num(row, "pinsker"));
      worst = Math.max(worst, dm, dp);
    }
    expect(worst).toBeLessThan(1e-9);
  });

  it("shows the branch crossover: moment tighter at small budgets, Pinsker at large", () => {
    for (const r of [0.1, 0.01]) {
      expect(momentBound(r, 1e-4)).toBeLessThan(pinskerBound(r, 1e-4));
      expect(pinskerBound(r, 1.0)).toBeLessThan(momentBound(r, 1.0));
    }
  });

  it("clamps the combined bound into [0, 1]", () => {
    expect(variationalBound(0.9, 5.0)).toBe(1.0);
    expect(variationalBound(0.0, 0.0)).toBe(0.0);
  });
});
