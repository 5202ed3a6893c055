/** Deterministic SVG assembly: no timestamps, no randomness, fixed styling,
 * so re-rendering the same data yields byte-identical output. */

export interface PanelGeom {
  x0: number;
  y0: number;
  width: number;
  height: number;
}

export interface Scale {
  (v: number): number;
  ticks: number[];
}

const F = (v: number): string => {
  // fixed decimal formatting keeps output stable across platforms
  const s = v.toFixed(3);
  return s === "-0.000" ? "0.000" : s;
};

export function linearScale(domain: [number, number], range: [number, number], tickCount = 5): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    d0 -= 0.5;
    d1 += 0.5;
  }
  const f = (v: number) => range[0] + ((v - d0) / (d1 - d0)) * (range[1] - range[0]);
  const step = (d1 - d0) / (tickCount - 1);
  f.ticks = Array.from({ length: tickCount }, (_, i) => d0 + i * step);
  return f as Scale;
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  if (d0 <= 0 || d1 <= 0) throw new Error("log scale requires positive domain");
  const l0 = Math.log10(d0);
  const l1 = Math.log10(d1);
  const f = (v: number) => range[0] + ((Math.log10(v) - l0) / (l1 - l0)) * (range[1] - range[0]);
  const ticks: number[] = [];
  for (let e = Math.ceil(l0); e <= Math.floor(l1); e++) ticks.push(10 ** e);
  if (ticks.length === 0) ticks.push(d0, d1);
  f.ticks = ticks;
  return f as Scale;
}

export function polyline(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  stroke: string,
  dashed = false
): string {
  const pts = xs.map((x, i) => `${F(sx(x))},${F(sy(ys[i]))}`).join(" ");
  const dash = dashed ? ' stroke-dasharray="6,4"' : "";
  return `<polyline fill="none" stroke="${stroke}" stroke-width="1.5"${dash} points="${pts}"/>`;
}

export function markers(
  xs: number[],
  ys: number[],
  sx: Scale,
  sy: Scale,
  color: string,
  shape: "dot" | "x"
): string {
  const parts: string[] = [];
  xs.forEach((x, i) => {
    const px = sx(x);
    const py = sy(ys[i]);
    if (shape === "dot") {
      parts.push(`<circle cx="${F(px)}" cy="${F(py)}" r="2" fill="${color}"/>`);
    } else {
      parts.push(
        `<path d="M${F(px - 2.5)},${F(py - 2.5)} L${F(px + 2.5)},${F(py + 2.5)} ` +
          `M${F(px - 2.5)},${F(py + 2.5)} L${F(px + 2.5)},${F(py - 2.5)}" ` +
          `stroke="${color}" stroke-width="1.2"/>`
      );
    }
  });
  return parts.join("");
}

/** Shaded band between lo and hi (used for +-2 std around the mean). */
export function band(
  xs: number[],
  lo: number[],
  hi: number[],
  sx: Scale,
  sy: Scale,
  fill: string
): string {
  const fwd = xs.map((x, i) => `${F(sx(x))},${F(sy(hi[i]))}`);
  const back = [...xs].reverse().map((x, i) => {
    const j = xs.length - 1 - i;
    return `${F(sx(x))},${F(sy(lo[j]))}`;
  });
  return `<polygon fill="${fill}" fill-opacity="0.2" stroke="none" points="${[...fwd, ...back].join(" ")}"/>`;
}

export function hline(y: number, sx: Scale, sy: Scale, stroke: string): string {
  const [a, b] = [sx.ticks[0], sx.ticks[sx.ticks.length - 1]];
  return `<line x1="${F(sx(a))}" y1="${F(sy(y))}" x2="${F(sx(b))}" y2="${F(sy(y))}" stroke="${stroke}" stroke-width="1" stroke-dasharray="2,3"/>`;
}

function fmtTick(v: number): string {
  if (v !== 0 && (Math.abs(v) < 1e-2 || Math.abs(v) >= 1e4)) return v.toExponential(0);
  return String(Math.round(v * 1000) / 1000);
}

export function axes(
  geom: PanelGeom,
  sx: Scale,
  sy: Scale,
  xLabel: string,
  yLabel: string,
  title: string
): string {
  const parts: string[] = [];
  const bottom = geom.y0 + geom.height;
  const right = geom.x0 + geom.width;
  parts.push(
    `<line x1="${geom.x0}" y1="${bottom}" x2="${right}" y2="${bottom}" stroke="black" stroke-width="1"/>`,
    `<line x1="${geom.x0}" y1="${geom.y0}" x2="${geom.x0}" y2="${bottom}" stroke="black" stroke-width="1"/>`
  );
  for (const t of sx.ticks) {
    const px = sx(t);
    parts.push(
      `<line x1="${F(px)}" y1="${bottom}" x2="${F(px)}" y2="${bottom + 4}" stroke="black" stroke-width="1"/>`,
      `<text x="${F(px)}" y="${bottom + 16}" font-size="10" text-anchor="middle">${fmtTick(t)}</text>`
    );
  }
  for (const t of sy.ticks) {
    const py = sy(t);
    parts.push(
      `<line x1="${geom.x0 - 4}" y1="${F(py)}" x2="${geom.x0}" y2="${F(py)}" stroke="black" stroke-width="1"/>`,
      `<text x="${geom.x0 - 7}" y="${F(py + 3)}" font-size="10" text-anchor="end">${fmtTick(t)}</text>`
    );
  }
  parts.push(
    `<text x="${geom.x0 + geom.width / 2}" y="${bottom + 32}" font-size="11" text-anchor="middle">${xLabel}</text>`,
    `<text x="${geom.x0 - 40}" y="${geom.y0 + geom.height / 2}" font-size="11" text-anchor="middle" transform="rotate(-90 ${geom.x0 - 40} ${geom.y0 + geom.height / 2})">${yLabel}</text>`,
    `<text x="${geom.x0 + geom.width / 2}" y="${geom.y0 - 8}" font-size="12" text-anchor="middle" font-weight="bold">${title}</text>`
  );
  return parts.join("\n");
}

export function legend(geom: PanelGeom, entries: Array<[string, string, boolean]>): string {
  // entries: [label, color, dashed]
  const parts: string[] = [];
  entries.forEach(([label, color, dashed], i) => {
    const y = geom.y0 + 14 + i * 14;
    const x = geom.x0 + geom.width - 120;
    const dash = dashed ? ' stroke-dasharray="6,4"' : "";
    parts.push(
      `<line x1="${x}" y1="${y}" x2="${x + 22}" y2="${y}" stroke="${color}" stroke-width="1.5"${dash}/>`,
      `<text x="${x + 27}" y="${y + 3}" font-size="10">${label}</text>`
    );
  });
  return parts.join("\n");
}

export function document(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${width}" height="${height}" fill="white"/>\n${body}\n</svg>\n`
  );
}
