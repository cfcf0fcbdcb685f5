#!/usr/bin/env node
/** Figure renderer for planner artifacts.
 *
 * Usage:
 *   beliefroadmap-plots trajectories --input distributions.json --output fig.svg [--method revise]
 *   beliefroadmap-plots w2 --input metrics.csv --output fig.svg
 */

import { readFileSync, writeFileSync } from "node:fs";
import { ParseError, parseDistributions, parseMetricsCsv } from "./schema.js";
import { renderTrajectories } from "./trajectories.js";
import { renderW2Distribution } from "./w2dist.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new ParseError(`bad argument '${key}'`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

export function run(argv: string[]): number {
  const [kind, ...rest] = argv;
  try {
    const args = parseArgs(rest);
    const input = args.get("input");
    const output = args.get("output");
    if (!input || !output) {
      throw new ParseError("--input and --output are required");
    }
    const text = readFileSync(input, "utf-8");
    let svg: string;
    if (kind === "trajectories") {
      svg = renderTrajectories(parseDistributions(text), { method: args.get("method") });
    } else if (kind === "w2") {
      svg = renderW2Distribution(parseMetricsCsv(text));
    } else {
      throw new ParseError(`unknown figure kind '${kind}' (use trajectories | w2)`);
    }
    writeFileSync(output, svg);
    console.log(`wrote ${output}`);
    return 0;
  } catch (err) {
    if (err instanceof ParseError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(run(process.argv.slice(2)));
}
