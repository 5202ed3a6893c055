#!/usr/bin/env node
/** One command per figure id:
 *
 *   pbcert-figures fig4-bound-sweep --input bound_sweep.csv --out fig4.svg
 *   pbcert-figures crossover --out crossover.svg
 *   pbcert-figures all --fixtures <dir> --out <dir>
 */

import * as fs from "fs";
import * as path from "path";

import { FIGURE_IDS, FigureId, inputTableFor, renderFigure } from "./figures";
import { SchemaError } from "./csv";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got '${argv.slice(i).join(" ")}'`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function renderOne(id: FigureId, input: string | undefined, out: string): void {
  const table = inputTableFor(id);
  let csvText: string | undefined;
  if (table !== null) {
    if (!input) throw new Error(`figure '${id}' requires --input <${table}.csv>`);
    csvText = fs.readFileSync(input, "utf8");
  }
  const doc = renderFigure(id, csvText);
  fs.mkdirSync(path.dirname(path.resolve(out)), { recursive: true });
  fs.writeFileSync(out, doc);
  console.log(`wrote ${out}`);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (!command || command === "--help" || command === "help") {
    console.log(`figures: ${FIGURE_IDS.join(", ")}, or 'all'`);
    return 0;
  }
  try {
    const flags = parseFlags(rest);
    if (command === "all") {
      const fixtures = flags.get("fixtures") ?? "fixtures";
      const outDir = flags.get("out") ?? "out";
      for (const id of FIGURE_IDS) {
        const table = inputTableFor(id);
        const input = table === null ? undefined : path.join(fixtures, `${table}.csv`);
        renderOne(id, input, path.join(outDir, `${id}.svg`));
      }
      return 0;
    }
    if (!(FIGURE_IDS as readonly string[]).includes(command)) {
      console.error(`unknown figure id '${command}' (know ${FIGURE_IDS.join(", ")})`);
      return 1;
    }
    renderOne(command as FigureId, flags.get("input"), flags.get("out") ?? `${command}.svg`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${(err as Error).message}`);
      return 2;
    }
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
