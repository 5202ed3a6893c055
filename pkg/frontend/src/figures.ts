/** Figure renderers: each takes raw CSV text and returns a complete SVG
 * document. Style conventions: solid lines are bounds, dashed lines are test
 * errors, shaded regions are +-2 standard deviations around the mean over
 * seeds, and the toy figure marks lower bounds with x's and upper bounds
 * with dots. */

import { aggregate, num, parseCsv, SchemaError, SeriesStats, Table } from "./csv";
import { crossoverGrid } from "./bounds";
import * as svg from "./svg";

export const FIGURE_IDS = [
  "fig1-toy-bounds",
  "fig2-scatter",
  "fig3-l2",
  "fig4-bound-sweep",
  "fig5-direct-opt",
  "fig6-oracle-variance",
  "crossover",
] as const;

export type FigureId = (typeof FIGURE_IDS)[number];

const GEOM: svg.PanelGeom = { x0: 60, y0: 30, width: 420, height: 300 };
const W = 540;
const H = 390;

const BLUE = "#1f77b4";
const ORANGE = "#ff7f0e";
const GREEN = "#2ca02c";

function panelScales(
  xDomain: [number, number],
  yDomain: [number, number],
  opts: { logX?: boolean } = {}
): { sx: svg.Scale; sy: svg.Scale } {
  const sx = opts.logX
    ? svg.logScale(xDomain, [GEOM.x0, GEOM.x0 + GEOM.width])
    : svg.linearScale(xDomain, [GEOM.x0, GEOM.x0 + GEOM.width]);
  const sy = svg.linearScale(yDomain, [GEOM.y0 + GEOM.height, GEOM.y0]);
  return { sx, sy };
}

function extent(values: number[], padFrac = 0.08): [number, number] {
  const finite = values.filter(Number.isFinite);
  if (finite.length === 0) throw new SchemaError("no finite values to plot");
  let lo = Math.min(...finite);
  let hi = Math.max(...finite);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = (hi - lo) * padFrac;
  return [lo - pad, hi + pad];
}

function bandAround(s: SeriesStats, k = 2): { lo: number[]; hi: number[] } {
  return {
    lo: s.mean.map((m, i) => m - k * s.std[i]),
    hi: s.mean.map((m, i) => m + k * s.std[i]),
  };
}

function renderToyBounds(csvText: string): string {
  const table = parseCsv(csvText, ["alpha", "m", "lower", "upper"]);
  const alpha = table.rows.map((r) => num(r, "alpha"));
  const lower = table.rows.map((r) => num(r, "lower"));
  const upper = table.rows.map((r) => num(r, "upper"));
  const { sx, sy } = panelScales(extent(alpha), extent([...lower, ...upper, 1.05]));
  const body = [
    svg.axes(GEOM, sx, sy, "prefix fraction of the training data", "bound value", "Bound curves vs prefix fraction"),
    svg.hline(1.0, sx, sy, "black"),
    svg.markers(alpha, lower, sx, sy, ORANGE, "x"),
    svg.markers(alpha, upper, sx, sy, BLUE, "dot"),
    svg.legend(GEOM, [
      ["upper bound", BLUE, false],
      ["lower bound", ORANGE, false],
      ["vacuity (1.0)", "black", true],
    ]),
  ].join("\n");
  return svg.document(W, H, body);
}

function renderScatter(csvText: string): string {
  // one panel per alpha: base-run weights against prefix-run weights, with
  // the identity line as reference
  const table = parseCsv(csvText, ["alpha", "seed", "coord", "w_base", "w_prior"]);
  const alphas = [...new Set(table.rows.map((r) => num(r, "alpha")))].sort((a, b) => a - b);
  const panelW = 220;
  const panelH = 220;
  const parts: string[] = [];
  alphas.forEach((alpha, pi) => {
    const geom: svg.PanelGeom = { x0: 60 + pi * (panelW + 60), y0: 30, width: panelW, height: panelH };
    const rows = table.rows.filter((r) => num(r, "alpha") === alpha);
    const xs = rows.map((r) => num(r, "w_base"));
    const ys = rows.map((r) => num(r, "w_prior"));
    const dom = extent([...xs, ...ys]);
    const sx = svg.linearScale(dom, [geom.x0, geom.x0 + geom.width], 4);
    const sy = svg.linearScale(dom, [geom.y0 + geom.height, geom.y0], 4);
    parts.push(
      svg.axes(geom, sx, sy, "base-run weight", "prefix-run weight", `prefix fraction ${alpha}`),
      svg.polyline([dom[0], dom[1]], [dom[0], dom[1]], sx, sy, "black", true),
      svg.markers(xs, ys, sx, sy, BLUE, "dot")
    );
  });
  const width = 60 + alphas.length * (panelW + 60);
  return svg.document(width, panelH + 120, parts.join("\n"));
}

function renderL2(csvText: string): string {
  const table = parseCsv(csvText, ["alpha", "seed", "d_prefix", "d_ghost"]);
  const prefix = aggregate(table, "alpha", "d_prefix");
  const ghost = aggregate(table, "alpha", "d_ghost");
  const pb = bandAround(prefix);
  const gb = bandAround(ghost);
  const ys = [...pb.lo, ...pb.hi, ...gb.lo, ...gb.hi];
  const { sx, sy } = panelScales(extent(prefix.x), extent(ys));
  const body = [
    svg.axes(GEOM, sx, sy, "prefix fraction", "scaled squared L2 distance", "Prefix vs ghost prior distance"),
    svg.band(prefix.x, pb.lo, pb.hi, sx, sy, BLUE),
    svg.band(ghost.x, gb.lo, gb.hi, sx, sy, ORANGE),
    svg.polyline(prefix.x, prefix.mean, sx, sy, BLUE),
    svg.polyline(ghost.x, ghost.mean, sx, sy, ORANGE),
    svg.legend(GEOM, [
      ["prefix data only", BLUE, false],
      ["prefix + ghost", ORANGE, false],
    ]),
  ].join("\n");
  return svg.document(W, H, body);
}

function renderBoundAndError(
  table: Table,
  boundCol: string,
  title: string
): string {
  const bound = aggregate(table, "alpha", boundCol);
  const test = aggregate(table, "alpha", "test_error");
  const bb = bandAround(bound);
  const hasTest = test.x.length > 0;
  const ys = [...bb.lo, ...bb.hi, ...(hasTest ? test.mean : [])];
  const { sx, sy } = panelScales(extent(bound.x), extent(ys));
  const parts = [
    svg.axes(GEOM, sx, sy, "prefix fraction", "error rate", title),
    svg.band(bound.x, bb.lo, bb.hi, sx, sy, BLUE),
    svg.polyline(bound.x, bound.mean, sx, sy, BLUE),
  ];
  if (hasTest) {
    const tb = bandAround(test);
    parts.push(svg.band(test.x, tb.lo, tb.hi, sx, sy, ORANGE));
    parts.push(svg.polyline(test.x, test.mean, sx, sy, ORANGE, true));
  }
  parts.push(
    svg.legend(GEOM, [
      ["error bound", BLUE, false],
      ["test error", ORANGE, true],
    ])
  );
  return svg.document(W, H, parts.join("\n"));
}

function renderBoundSweep(csvText: string): string {
  const table = parseCsv(csvText, ["alpha", "seed", "bound", "test_error"]);
  return renderBoundAndError(table, "bound", "Certified bound and test error");
}

function renderDirectOpt(csvText: string): string {
  const table = parseCsv(csvText, ["alpha", "seed", "step", "final_bound", "test_error"]);
  // only the completion rows carry a final bound; aggregate() drops the NaNs
  return renderBoundAndError(table, "final_bound", "Directly optimized bound and test error");
}

function renderOracleVariance(csvText: string): string {
  const table = parseCsv(csvText, ["alpha", "seed", "iso_bound", "oracle_bound"]);
  const iso = aggregate(table, "alpha", "iso_bound");
  const oracle = aggregate(table, "alpha", "oracle_bound");
  const ib = bandAround(iso);
  const ob = bandAround(oracle);
  const ys = [...ib.lo, ...ib.hi, ...ob.lo, ...ob.hi];
  const { sx, sy } = panelScales(extent(iso.x), extent(ys));
  const body = [
    svg.axes(GEOM, sx, sy, "prefix fraction", "error bound", "Isotropic vs optimal-variance prior"),
    svg.band(iso.x, ib.lo, ib.hi, sx, sy, BLUE),
    svg.band(oracle.x, ob.lo, ob.hi, sx, sy, GREEN),
    svg.polyline(iso.x, iso.mean, sx, sy, BLUE),
    svg.polyline(oracle.x, oracle.mean, sx, sy, GREEN),
    svg.legend(GEOM, [
      ["isotropic prior", BLUE, false],
      ["optimal variance", GREEN, false],
    ]),
  ].join("\n");
  return svg.document(W, H, body);
}

function renderCrossover(): string {
  const pts = crossoverGrid();
  const rHats = [...new Set(pts.map((p) => p.rHat))].sort((a, b) => b - a);
  const panels: string[] = [];
  const panelW = 380;
  rHats.forEach((rHat, pi) => {
    const geom: svg.PanelGeom = { x0: 60 + pi * (panelW + 70), y0: 30, width: panelW, height: 300 };
    const mine = pts.filter((p) => p.rHat === rHat);
    const bs = mine.map((p) => p.b);
    const moment = mine.map((p) => p.moment);
    const pinsker = mine.map((p) => p.pinsker);
    const sx = svg.logScale([bs[0], bs[bs.length - 1]], [geom.x0, geom.x0 + geom.width]);
    const sy = svg.linearScale(
      extent([...moment, ...pinsker].map((v) => Math.min(v, 1.6))),
      [geom.y0 + geom.height, geom.y0]
    );
    panels.push(
      svg.axes(geom, sx, sy, "divergence budget B", "risk bound", `empirical risk ${rHat}`),
      svg.polyline(bs, moment.map((v) => Math.min(v, 1.6)), sx, sy, BLUE),
      svg.polyline(bs, pinsker.map((v) => Math.min(v, 1.6)), sx, sy, GREEN, true),
      svg.legend(geom, [
        ["moment branch", BLUE, false],
        ["Pinsker branch", GREEN, true],
      ])
    );
  });
  return svg.document(60 + rHats.length * (panelW + 70), H, panels.join("\n"));
}

const INPUT_SCHEMAS: Record<FigureId, string | null> = {
  "fig1-toy-bounds": "toy_fig1",
  "fig2-scatter": "param_scatter",
  "fig3-l2": "l2_sweep",
  "fig4-bound-sweep": "bound_sweep",
  "fig5-direct-opt": "direct_opt",
  "fig6-oracle-variance": "oracle_variance",
  crossover: null,
};

export function inputTableFor(id: FigureId): string | null {
  return INPUT_SCHEMAS[id];
}

export function renderFigure(id: FigureId, csvText?: string): string {
  switch (id) {
    case "fig1-toy-bounds":
      return renderToyBounds(requireInput(id, csvText));
    case "fig2-scatter":
      return renderScatter(requireInput(id, csvText));
    case "fig3-l2":
      return renderL2(requireInput(id, csvText));
    case "fig4-bound-sweep":
      return renderBoundSweep(requireInput(id, csvText));
    case "fig5-direct-opt":
      return renderDirectOpt(requireInput(id, csvText));
    case "fig6-oracle-variance":
      return renderOracleVariance(requireInput(id, csvText));
    case "crossover":
      return renderCrossover();
    default:
      throw new Error(`unknown figure id '${id}'`);
  }
}

function requireInput(id: FigureId, csvText?: string): string {
  if (csvText === undefined) {
    throw new SchemaError(`figure '${id}' needs an input CSV`);
  }
  return csvText;
}
