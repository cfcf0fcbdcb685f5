import { mkdtempSync, readFileSync, existsSync, statSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { covarianceEllipse } from "../src/geometry.js";
import { ParseError, parseDistributions, parseMetricsCsv } from "../src/schema.js";
import { renderTrajectories } from "../src/trajectories.js";
import { renderW2Distribution, W2_DISPLAY_CUTOFF } from "../src/w2dist.js";
import { run } from "../src/cli.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

const read = (name: string) => readFileSync(join(FIXTURES, name), "utf-8");

describe("schema parsing", () => {
  it("parses the metrics csv", () => {
    const rows = parseMetricsCsv(read("metrics.csv"));
    expect(rows).toHaveLength(6);
    expect(rows[0].method).toBe("baseline");
    expect(rows[4].w2).toBeCloseTo(1.5);
  });

  it("names a missing column", () => {
    expect(() => parseMetricsCsv(read("metrics_missing_method.csv"))).toThrowError(
      /missing column 'method'/,
    );
  });

  it("parses the distributions document", () => {
    const doc = parseDistributions(read("distributions.json"));
    expect(doc.entries.length).toBeGreaterThan(0);
    expect(doc.workspaceLo).toEqual([0, 0]);
    expect(doc.workspaceHi).toEqual([10, 10]);
  });

  it("names a missing entry field", () => {
    const doc = JSON.parse(read("distributions.json"));
    delete doc.entries[0].planned_terminal_cov;
    expect(() => parseDistributions(JSON.stringify(doc))).toThrowError(
      /entry 0: missing field 'planned_terminal_cov'/,
    );
  });

  it("rejects unknown schema ids", () => {
    const doc = JSON.parse(read("distributions.json"));
    doc.schema = "something-else";
    expect(() => parseDistributions(JSON.stringify(doc))).toThrowError(ParseError);
  });
});

describe("covariance ellipse", () => {
  it("isotropic 0.2 covariance has 3-sigma radius 3*sqrt(0.2)", () => {
    const e = covarianceEllipse(
      [
        [0.2, 0],
        [0, 0.2],
      ],
      3,
    );
    expect(e.rx).toBeCloseTo(3 * Math.sqrt(0.2), 12);
    expect(e.ry).toBeCloseTo(3 * Math.sqrt(0.2), 12);
  });

  it("recovers principal axes of a rotated covariance", () => {
    // covariance with eigenvalues 4 and 1, axes rotated 30 degrees
    const t = Math.PI / 6;
    const c = Math.cos(t);
    const s = Math.sin(t);
    const cov = [
      [4 * c * c + 1 * s * s, (4 - 1) * c * s],
      [(4 - 1) * c * s, 4 * s * s + 1 * c * c],
    ];
    const e = covarianceEllipse(cov, 1);
    expect(e.rx).toBeCloseTo(2, 10);
    expect(e.ry).toBeCloseTo(1, 10);
    expect(((e.angle % Math.PI) + Math.PI) % Math.PI).toBeCloseTo(t, 10);
  });
});

describe("trajectory figure", () => {
  it("renders panels with the workspace extent", () => {
    const svg = renderTrajectories(parseDistributions(read("distributions.json")));
    expect(svg).toContain("<svg");
    expect(svg).toContain('data-extent="0,0,10,10"');
    expect(svg).toContain('data-role="planned-path"');
    expect(svg).toContain('data-role="planned-ellipse"');
    expect(svg).toContain('data-role="empirical-ellipse"');
    expect(svg).toContain('data-role="rollout"');
  });

  it("renders the planned path alone when rollouts are empty", () => {
    const svg = renderTrajectories(parseDistributions(read("distributions_empty_rollouts.json")));
    expect(svg).toContain('data-role="planned-path"');
    expect(svg).not.toContain('data-role="rollout"');
  });

  it("draws the planned ellipse radius from the covariance", () => {
    const doc = parseDistributions(read("distributions_isotropic.json"));
    const svg = renderTrajectories(doc);
    // panel is 360px with 40px margins over a 10m extent: 28 px per meter
    const expected = 3 * Math.sqrt(0.2) * 28;
    const match = svg.match(/data-role="planned-ellipse"/) && svg.match(/rx="([0-9.]+)"[^>]*data-role="planned-ellipse"/);
    expect(match).not.toBeNull();
    expect(Number(match![1])).toBeCloseTo(expected, 2);
  });

  it("is deterministic", () => {
    const doc = parseDistributions(read("distributions.json"));
    expect(renderTrajectories(doc)).toBe(renderTrajectories(doc));
  });
});

describe("metric distribution figure", () => {
  it("excludes values above the cutoff but annotates them", () => {
    const rows = parseMetricsCsv(read("metrics.csv"));
    const svg = renderW2Distribution(rows);
    expect(W2_DISPLAY_CUTOFF).toBe(1.0);
    expect(svg).not.toContain('data-value="1.5"');
    expect(svg).toContain("1 value(s) above 1 not shown");
    expect(svg).toContain('data-value="0.64"');
  });

  it("keeps the fixed method order left to right", () => {
    const rows = parseMetricsCsv(read("metrics.csv"));
    const svg = renderW2Distribution(rows);
    const order = ["baseline", "robust", "rewired", "revise"].map((m) =>
      svg.indexOf(`>${m}</text>`),
    );
    expect(order.every((pos) => pos >= 0)).toBe(true);
    expect([...order].sort((a, b) => a - b)).toEqual(order);
  });

  it("handles a single degenerate value", () => {
    const rows = parseMetricsCsv(
      "experiment,method,seed,goal_index,goal_x,goal_y,reached,w2\n" +
        "multi_query,revise,0,0,1,1,True,0.25\n",
    );
    const svg = renderW2Distribution(rows);
    expect(svg).toContain('data-method="revise"');
  });

  it("is byte-identical across renders", () => {
    const rows = parseMetricsCsv(read("metrics.csv"));
    expect(renderW2Distribution(rows)).toBe(renderW2Distribution(rows));
  });
});

describe("cli", () => {
  it("writes both figure kinds", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const out1 = join(dir, "traj.svg");
    const code1 = run([
      "trajectories",
      "--input",
      join(FIXTURES, "distributions.json"),
      "--output",
      out1,
    ]);
    expect(code1).toBe(0);
    expect(existsSync(out1)).toBe(true);
    expect(statSync(out1).size).toBeGreaterThan(0);

    const out2 = join(dir, "w2.svg");
    const code2 = run(["w2", "--input", join(FIXTURES, "metrics.csv"), "--output", out2]);
    expect(code2).toBe(0);
    expect(statSync(out2).size).toBeGreaterThan(0);
  });

  it("fails cleanly on schema errors", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    const code = run([
      "w2",
      "--input",
      join(FIXTURES, "metrics_missing_method.csv"),
      "--output",
      join(dir, "x.svg"),
    ]);
    expect(code).toBe(1);
  });
});
