/**
 * Figure kinds: each function turns parsed report tables into one SVG.
 *
 * Pure rendering of precomputed columns; no statistics are recomputed here.
 * Every kind accepts one table or several (overlaid and labeled by file
 * name), except trajectories which is a single-file figure.
 */

import { basename } from "path";

import { numColumn, requireColumns, strColumn, type Table } from "./csv.js";
import { lineChart, pathChart, type Path2D, type Series } from "./svg.js";

export const IC_COLOR = "#4361ee";
export const GC_COLOR = "#e63946";
const EXTRA_COLORS = ["#2d6a4f", "#9d4edd", "#f77f00", "#577590"];

export type PlotKind = "variance" | "transport" | "trajectories" | "pfode" | "convergence";

function shortName(table: Table): string {
  return basename(table.source).replace(/\.csv$/, "");
}

function pairedSeries(
  tables: Table[],
  xCol: string,
  icCol: string,
  gcCol: string
): Series[] {
  const series: Series[] = [];
  tables.forEach((t, i) => {
    requireColumns(t, [xCol, icCol, gcCol]);
    const x = numColumn(t, xCol);
    const prefix = tables.length > 1 ? `${shortName(t)} ` : "";
    const dash = i > 0 ? "4,3" : undefined;
    series.push({
      x,
      y: numColumn(t, icCol),
      color: IC_COLOR,
      label: `${prefix}IC`,
      dash,
    });
    series.push({
      x,
      y: numColumn(t, gcCol),
      color: GC_COLOR,
      label: `${prefix}GC`,
      dash,
    });
  });
  return series;
}

export function renderVariance(tables: Table[]): string {
  return lineChart({
    title: "Gradient variance during training",
    subtitle: "per-batch variance of the per-sample gradients",
    xLabel: "training step",
    yLabel: "gradient variance",
    logY: true,
    series: pairedSeries(tables, "step", "ic_variance", "gc_variance"),
  });
}

export function renderTransport(tables: Table[]): string {
  const series = pairedSeries(tables, "timestep", "ic_cost", "gc_cost");
  for (const s of series) s.markers = true;
  return lineChart({
    title: "Transport cost per timestep",
    subtitle: "mean squared endpoint-to-intermediate distance",
    xLabel: "timestep index",
    yLabel: "transport cost",
    series,
  });
}

export function renderPfode(tables: Table[]): string {
  const series = pairedSeries(tables, "step", "ic_distance", "gc_distance");
  for (const s of series) s.markers = true;
  return lineChart({
    title: "Distance to the probability-flow update",
    subtitle: "mean distance between coupled pairs and one Euler step",
    xLabel: "training step",
    yLabel: "distance",
    series,
  });
}

export function renderTrajectories(tables: Table[]): string {
  if (tables.length !== 1) {
    throw new Error("trajectories takes exactly one input CSV");
  }
  const t = tables[0]!;
  requireColumns(t, ["arm", "sample", "timestep", "sigma", "x0", "x1"]);
  const arm = strColumn(t, "arm");
  const sample = strColumn(t, "sample");
  const x0 = numColumn(t, "x0");
  const x1 = numColumn(t, "x1");

  const byPath = new Map<string, Path2D>();
  for (let i = 0; i < arm.length; i++) {
    const key = `${arm[i]}:${sample[i]}`;
    let p = byPath.get(key);
    if (!p) {
      p = { points: [], color: arm[i] === "gc" ? GC_COLOR : IC_COLOR };
      byPath.set(key, p);
    }
    p.points.push([x0[i]!, x1[i]!]);
  }
  return pathChart({
    title: "Coupling trajectories",
    subtitle: `${byPath.size} paths, noise (small dot) to data (large dot)`,
    paths: [...byPath.values()],
    legend: [
      { color: IC_COLOR, label: "IC" },
      { color: GC_COLOR, label: "GC" },
    ],
  });
}

export function renderConvergence(tables: Table[]): string {
  const series: Series[] = [];
  tables.forEach((t, i) => {
    requireColumns(t, ["step", "metric", "value"]);
    const step = numColumn(t, "step");
    const metric = strColumn(t, "metric");
    const value = numColumn(t, "value");
    const x: number[] = [];
    const y: number[] = [];
    for (let j = 0; j < metric.length; j++) {
      if (metric[j] === "loss") {
        x.push(step[j]!);
        y.push(value[j]!);
      }
    }
    series.push({
      x,
      y,
      color: EXTRA_COLORS[i % EXTRA_COLORS.length]!,
      label: tables.length > 1 ? shortName(t) : "loss",
    });
  });
  return lineChart({
    title: "Training loss",
    subtitle: "consistency loss per logging interval",
    xLabel: "training step",
    yLabel: "loss",
    logY: true,
    series,
  });
}

export function render(kind: PlotKind, tables: Table[]): string {
  switch (kind) {
    case "variance":
      return renderVariance(tables);
    case "transport":
      return renderTransport(tables);
    case "trajectories":
      return renderTrajectories(tables);
    case "pfode":
      return renderPfode(tables);
    case "convergence":
      return renderConvergence(tables);
  }
}
