/**
 * Hand-rolled SVG charts.
 *
 * Two builders cover every figure kind: `lineChart` (series over a shared
 * x-axis, optional log scales) and `pathChart` (2D trajectories with equal
 * axis scaling). Output is a plain SVG string with nothing run-dependent in
 * it, so identical inputs give byte-identical images.
 */

export interface Series {
  x: number[];
  y: number[];
  color: string;
  label: string;
  width?: number;
  opacity?: number;
  dash?: string; // stroke-dasharray
  markers?: boolean; // circle at every point
}

export interface ChartOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  logY?: boolean;
  logX?: boolean;
  width?: number;
  height?: number;
}

export interface Path2D {
  points: Array<[number, number]>;
  color: string;
  opacity?: number;
}

export interface PathChartOpts {
  title: string;
  subtitle?: string;
  paths: Path2D[];
  legend: Array<{ color: string; label: string }>;
  width?: number;
}

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function fmtTick(v: number): string {
  if (v !== 0 && (Math.abs(v) < 1e-3 || Math.abs(v) >= 1e5)) {
    return v.toExponential(0).replace("e+", "e");
  }
  return v % 1 === 0 ? String(v) : String(parseFloat(v.toPrecision(3)));
}

export function niceTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 0.01; v += step) ticks.push(v);
  return ticks;
}

/** Powers of ten covering [min, max], min > 0. */
function logTicks(min: number, max: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(min) - 1e-9); Math.pow(10, e) <= max * 1.0001; e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length > 0 ? ticks : [min];
}

interface Scale {
  of: (v: number) => number;
  ticks: number[];
}

function makeScale(
  values: number[],
  log: boolean,
  lo: number,
  hi: number
): Scale {
  let vals = values.filter((v) => Number.isFinite(v));
  if (log) vals = vals.filter((v) => v > 0);
  // degenerate (no data): render an empty unit domain
  let min = vals.length > 0 ? Math.min(...vals) : log ? 1e-1 : 0;
  let max = vals.length > 0 ? Math.max(...vals) : 1;
  if (min === max) {
    min = log ? min / 2 : min - 0.5;
    max = log ? max * 2 : max + 0.5;
  }
  if (log) {
    const lmin = Math.log10(min);
    const lmax = Math.log10(max);
    return {
      of: (v) => lo + ((Math.log10(v) - lmin) / (lmax - lmin)) * (hi - lo),
      ticks: logTicks(min, max),
    };
  }
  const pad = vals.length > 0 ? (max - min) * 0.05 : 0;
  const pmin = min - pad;
  const pmax = max + pad;
  return {
    of: (v) => lo + ((v - pmin) / (pmax - pmin)) * (hi - lo),
    ticks: niceTicks(pmin, pmax, 5),
  };
}

function legendBlock(
  entries: Array<{ color: string; label: string; dash?: string }>,
  x: number,
  y: number
): string {
  const width = Math.max(0, ...entries.map((e) => e.label.length)) * 4.6 + 26;
  let s = `<rect x="${x - width}" y="${y - 6}" width="${width}" height="${entries.length * 11 + 4}" rx="2" fill="white" fill-opacity="0.85"/>\n`;
  entries.forEach((e, i) => {
    const ly = y + i * 11;
    s += `<line x1="${x - width + 4}" y1="${ly}" x2="${x - width + 18}" y2="${ly}" stroke="${e.color}" stroke-width="1.5"${e.dash ? ` stroke-dasharray="${e.dash}"` : ""}/>\n`;
    s += `<text x="${x - width + 22}" y="${ly + 3}" font-size="6.5" fill="#444">${esc(e.label)}</text>\n`;
  });
  return s;
}

export function lineChart(opts: ChartOpts): string {
  const W = opts.width ?? 640;
  const H = opts.height ?? 300;
  const ml = 62;
  const mr = 16;
  const mt = 30;
  const mb = 44;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const xs = makeScale(opts.series.flatMap((s) => s.x), opts.logX ?? false, ml, ml + pw);
  const ys = makeScale(
    opts.series.flatMap((s) => s.y),
    opts.logY ?? false,
    mt + ph,
    mt
  );

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;
  s += `<text x="${ml}" y="${mt - 16}" font-size="10" font-weight="600" fill="#222">${esc(opts.title)}</text>\n`;
  if (opts.subtitle) {
    s += `<text x="${ml}" y="${mt - 6}" font-size="7" fill="#888">${esc(opts.subtitle)}</text>\n`;
  }
  s += `<defs><clipPath id="plot"><rect x="${ml}" y="${mt}" width="${pw}" height="${ph}"/></clipPath></defs>\n`;

  for (const v of ys.ticks) {
    const y = ys.of(v).toFixed(1);
    s += `<line x1="${ml}" y1="${y}" x2="${ml + pw}" y2="${y}" stroke="#eee" stroke-width="0.5"/>\n`;
    s += `<text x="${ml - 5}" y="${(ys.of(v) + 2.5).toFixed(1)}" text-anchor="end" font-size="6.5" fill="#666">${esc(fmtTick(v))}</text>\n`;
  }
  for (const v of xs.ticks) {
    const x = xs.of(v).toFixed(1);
    s += `<line x1="${x}" y1="${mt + ph}" x2="${x}" y2="${mt + ph + 3}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${x}" y="${mt + ph + 12}" text-anchor="middle" font-size="6.5" fill="#666">${esc(fmtTick(v))}</text>\n`;
  }

  for (const sr of opts.series) {
    const pts: string[] = [];
    for (let i = 0; i < sr.x.length; i++) {
      const xv = sr.x[i]!;
      const yv = sr.y[i]!;
      if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
      if (opts.logY && yv <= 0) continue;
      if (opts.logX && xv <= 0) continue;
      pts.push(`${xs.of(xv).toFixed(1)},${ys.of(yv).toFixed(1)}`);
    }
    if (pts.length === 0) continue;
    s += `<polyline clip-path="url(#plot)" fill="none" stroke="${sr.color}" stroke-width="${sr.width ?? 1.2}" opacity="${sr.opacity ?? 1}"${sr.dash ? ` stroke-dasharray="${sr.dash}"` : ""} points="${pts.join(" ")}"/>\n`;
    if (sr.markers) {
      for (const p of pts) {
        const [px, py] = p.split(",");
        s += `<circle clip-path="url(#plot)" cx="${px}" cy="${py}" r="1.6" fill="${sr.color}" opacity="${sr.opacity ?? 1}"/>\n`;
      }
    }
  }

  s += `<line x1="${ml}" y1="${mt}" x2="${ml}" y2="${mt + ph}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<line x1="${ml}" y1="${mt + ph}" x2="${ml + pw}" y2="${mt + ph}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<text x="${ml + pw / 2}" y="${H - 6}" text-anchor="middle" font-size="8" fill="#444">${esc(opts.xLabel)}</text>\n`;
  s += `<text x="14" y="${mt + ph / 2}" text-anchor="middle" font-size="8" fill="#444" transform="rotate(-90,14,${mt + ph / 2})">${esc(opts.yLabel)}</text>\n`;
  s += legendBlock(opts.series, ml + pw - 4, mt + 8);
  s += `</svg>\n`;
  return s;
}

export function pathChart(opts: PathChartOpts): string {
  const W = opts.width ?? 420;
  const H = W;
  const ml = 46;
  const mr = 16;
  const mt = 30;
  const mb = 40;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const allX = opts.paths.flatMap((p) => p.points.map((q) => q[0]));
  const allY = opts.paths.flatMap((p) => p.points.map((q) => q[1]));
  // shared span so both axes use the same unit length
  const cx = allX.length > 0 ? (Math.min(...allX) + Math.max(...allX)) / 2 : 0;
  const cy = allY.length > 0 ? (Math.min(...allY) + Math.max(...allY)) / 2 : 0;
  const spanX = allX.length > 0 ? Math.max(...allX) - Math.min(...allX) : 2;
  const spanY = allY.length > 0 ? Math.max(...allY) - Math.min(...allY) : 2;
  const half = (Math.max(spanX, spanY, 1e-9) / 2) * 1.1;
  const xOf = (v: number) => ml + ((v - (cx - half)) / (2 * half)) * pw;
  const yOf = (v: number) => mt + ph - ((v - (cy - half)) / (2 * half)) * ph;

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;
  s += `<text x="${ml}" y="${mt - 16}" font-size="10" font-weight="600" fill="#222">${esc(opts.title)}</text>\n`;
  if (opts.subtitle) {
    s += `<text x="${ml}" y="${mt - 6}" font-size="7" fill="#888">${esc(opts.subtitle)}</text>\n`;
  }
  s += `<defs><clipPath id="plot"><rect x="${ml}" y="${mt}" width="${pw}" height="${ph}"/></clipPath></defs>\n`;

  const ticks = niceTicks(cx - half, cx + half, 5);
  for (const v of ticks) {
    s += `<line x1="${xOf(v).toFixed(1)}" y1="${mt + ph}" x2="${xOf(v).toFixed(1)}" y2="${mt + ph + 3}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${xOf(v).toFixed(1)}" y="${mt + ph + 12}" text-anchor="middle" font-size="6.5" fill="#666">${esc(fmtTick(v))}</text>\n`;
  }
  const yTicks = niceTicks(cy - half, cy + half, 5);
  for (const v of yTicks) {
    s += `<line x1="${ml - 3}" y1="${yOf(v).toFixed(1)}" x2="${ml}" y2="${yOf(v).toFixed(1)}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${ml - 5}" y="${(yOf(v) + 2.5).toFixed(1)}" text-anchor="end" font-size="6.5" fill="#666">${esc(fmtTick(v))}</text>\n`;
  }

  for (const p of opts.paths) {
    if (p.points.length === 0) continue;
    const pts = p.points
      .map(([x, y]) => `${xOf(x).toFixed(1)},${yOf(y).toFixed(1)}`)
      .join(" ");
    s += `<polyline clip-path="url(#plot)" fill="none" stroke="${p.color}" stroke-width="0.8" opacity="${p.opacity ?? 0.55}" points="${pts}"/>\n`;
    const start = p.points[0]!;
    const end = p.points[p.points.length - 1]!;
    s += `<circle clip-path="url(#plot)" cx="${xOf(start[0]).toFixed(1)}" cy="${yOf(start[1]).toFixed(1)}" r="1.3" fill="${p.color}" opacity="0.8"/>\n`;
    s += `<circle clip-path="url(#plot)" cx="${xOf(end[0]).toFixed(1)}" cy="${yOf(end[1]).toFixed(1)}" r="1.8" fill="${p.color}"/>\n`;
  }

  s += `<line x1="${ml}" y1="${mt}" x2="${ml}" y2="${mt + ph}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<line x1="${ml}" y1="${mt + ph}" x2="${ml + pw}" y2="${mt + ph}" stroke="#333" stroke-width="0.7"/>\n`;
  s += `<text x="${ml + pw / 2}" y="${H - 6}" text-anchor="middle" font-size="8" fill="#444">x0</text>\n`;
  s += `<text x="14" y="${mt + ph / 2}" text-anchor="middle" font-size="8" fill="#444" transform="rotate(-90,14,${mt + ph / 2})">x1</text>\n`;
  s += legendBlock(opts.legend, ml + pw - 4, mt + 8);
  s += `</svg>\n`;
  return s;
}
