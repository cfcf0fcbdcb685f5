/** Artifact parsing for the planner's export files. */

export class ParseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ParseError";
  }
}

export interface MetricsRow {
  experiment: string;
  method: string;
  seed: number;
  goalIndex: number;
  reached: boolean;
  w2: number | null;
  mse: number | null;
  plannedLambdaMax: number | null;
}

export const METHOD_ORDER = ["baseline", "robust", "rewired", "revise"] as const;

const REQUIRED_METRIC_COLUMNS = ["experiment", "method", "seed", "goal_index", "reached", "w2"];

/** Parse the metrics CSV (simple comma format, no quoting). */
export function parseMetricsCsv(text: string): MetricsRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new ParseError("metrics csv: file is empty");
  }
  const header = lines[0].split(",");
  for (const column of REQUIRED_METRIC_COLUMNS) {
    if (!header.includes(column)) {
      throw new ParseError(`metrics csv: missing column '${column}'`);
    }
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const rows: MetricsRow[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    const get = (name: string) => parts[index.get(name)!] ?? "";
    const numberOrNull = (name: string) => {
      const raw = get(name);
      if (raw === "") return null;
      const value = Number(raw);
      if (Number.isNaN(value)) {
        throw new ParseError(`metrics csv: non-numeric value '${raw}' in column '${name}'`);
      }
      return value;
    };
    rows.push({
      experiment: get("experiment"),
      method: get("method"),
      seed: Number(get("seed")),
      goalIndex: Number(get("goal_index")),
      reached: get("reached") === "True" || get("reached") === "true",
      w2: numberOrNull("w2"),
      mse: numberOrNull("mse"),
      plannedLambdaMax: numberOrNull("planned_lambda_max"),
    });
  }
  return rows;
}

export interface DistributionEntry {
  experiment: string;
  method: string;
  seed: number;
  goalIndex: number;
  goalMean: number[];
  plannedMeanPath: number[][];
  plannedTerminalMean: number[];
  plannedTerminalCov: number[][];
  empiricalTerminalMean: number[];
  empiricalTerminalCov: number[][];
  finalStates: number[][];
  rolloutTraces: number[][][];
}

export interface DistributionsDoc {
  workspaceLo: [number, number];
  workspaceHi: [number, number];
  entries: DistributionEntry[];
}

const DISTRIBUTIONS_SCHEMA = "beliefroadmap/distributions-v1";

function requireField<T>(obj: Record<string, unknown>, field: string, context: string): T {
  if (!(field in obj) || obj[field] === undefined || obj[field] === null) {
    throw new ParseError(`${context}: missing field '${field}'`);
  }
  return obj[field] as T;
}

/** Parse the distribution-sample JSON document. */
export function parseDistributions(text: string): DistributionsDoc {
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(text) as Record<string, unknown>;
  } catch (err) {
    throw new ParseError(`distributions json: invalid JSON (${String(err)})`);
  }
  if (doc["schema"] !== DISTRIBUTIONS_SCHEMA) {
    throw new ParseError(
      `distributions json: unsupported schema '${String(doc["schema"])}'`,
    );
  }
  const config = requireField<Record<string, unknown>>(doc, "config", "distributions json");
  const fieldCfg = requireField<Record<string, unknown>>(config, "field", "distributions json config");
  const origin = requireField<number[]>(fieldCfg, "origin", "distributions json config.field");
  const extent = requireField<number[]>(fieldCfg, "extent", "distributions json config.field");
  const rawEntries = requireField<Record<string, unknown>[]>(doc, "entries", "distributions json");
  const entries = rawEntries.map((raw, i) => {
    const at = `distributions entry ${i}`;
    return {
      experiment: requireField<string>(raw, "experiment", at),
      method: requireField<string>(raw, "method", at),
      seed: requireField<number>(raw, "seed", at),
      goalIndex: requireField<number>(raw, "goal_index", at),
      goalMean: requireField<number[]>(raw, "goal_mean", at),
      plannedMeanPath: requireField<number[][]>(raw, "planned_mean_path", at),
      plannedTerminalMean: requireField<number[]>(raw, "planned_terminal_mean", at),
      plannedTerminalCov: requireField<number[][]>(raw, "planned_terminal_cov", at),
      empiricalTerminalMean: requireField<number[]>(raw, "empirical_terminal_mean", at),
      empiricalTerminalCov: requireField<number[][]>(raw, "empirical_terminal_cov", at),
      finalStates: requireField<number[][]>(raw, "final_states", at),
      rolloutTraces: requireField<number[][][]>(raw, "rollout_traces", at),
    };
  });
  return {
    workspaceLo: [origin[0], origin[1]],
    workspaceHi: [origin[0] + extent[0], origin[1] + extent[1]],
    entries,
  };
}
