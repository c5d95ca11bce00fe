export { parseCsv, readTable, requireColumns, numColumn, strColumn, SchemaError } from "./csv.js";
export type { Table } from "./csv.js";
export { lineChart, pathChart, niceTicks, esc } from "./svg.js";
export type { Series, ChartOpts, Path2D, PathChartOpts } from "./svg.js";
export {
  render,
  renderVariance,
  renderTransport,
  renderTrajectories,
  renderPfode,
  renderConvergence,
  IC_COLOR,
  GC_COLOR,
} from "./plots.js";
export type { PlotKind } from "./plots.js";
export { runCli } from "./cli.js";
