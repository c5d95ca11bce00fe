#!/usr/bin/env node
/**
 * ctlab-plot — render ctlab CSV reports to SVG.
 *
 * Usage:
 *   ctlab-plot <variance|transport|trajectories|pfode|convergence>
 *              --in report.csv [--in more.csv ...] --out figure.svg
 *
 * Exit codes: 0 success, 2 usage or schema error (the message names the
 * offending column), 4 I/O failure.
 */

import { writeFileSync } from "fs";

import { readTable, SchemaError, type Table } from "./csv.js";
import { render, type PlotKind } from "./plots.js";

const KINDS: PlotKind[] = ["variance", "transport", "trajectories", "pfode", "convergence"];

const USAGE =
  "usage: ctlab-plot <variance|transport|trajectories|pfode|convergence> " +
  "--in <csv> [--in <csv> ...] --out <svg>";

interface Args {
  kind: PlotKind;
  inputs: string[];
  out: string;
}

function parseArgs(argv: string[]): Args {
  if (argv.length === 0) throw new SchemaError(USAGE);
  const kind = argv[0] as PlotKind;
  if (!KINDS.includes(kind)) {
    throw new SchemaError(`unknown plot kind "${argv[0]}"\n${USAGE}`);
  }
  const inputs: string[] = [];
  let out: string | undefined;
  for (let i = 1; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--in") {
      const v = argv[++i];
      if (v === undefined) throw new SchemaError(`--in needs a value\n${USAGE}`);
      inputs.push(v);
    } else if (arg === "--out") {
      const v = argv[++i];
      if (v === undefined) throw new SchemaError(`--out needs a value\n${USAGE}`);
      out = v;
    } else {
      throw new SchemaError(`unknown argument "${arg}"\n${USAGE}`);
    }
  }
  if (inputs.length === 0) throw new SchemaError(`no --in files given\n${USAGE}`);
  if (out === undefined) throw new SchemaError(`no --out file given\n${USAGE}`);
  return { kind, inputs, out };
}

/** Run the tool; returns the process exit code instead of exiting. */
export function runCli(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  let tables: Table[];
  try {
    tables = args.inputs.map(readTable);
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(`i/o error: ${(err as Error).message}`);
    return 4;
  }
  let svg: string;
  try {
    svg = render(args.kind, tables);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  try {
    writeFileSync(args.out, svg);
  } catch (err) {
    console.error(`i/o error: ${(err as Error).message}`);
    return 4;
  }
  return 0;
}

const isMain =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (isMain) {
  process.exit(runCli(process.argv.slice(2)));
}
