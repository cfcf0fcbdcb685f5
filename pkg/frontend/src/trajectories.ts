/** Trajectory overlay figure: rollout traces, planned mean path, and 3-sigma
 * terminal ellipses (planned and empirical), one panel per entry. */

import { covarianceEllipse, Frame, fmt } from "./geometry.js";
import { DistributionsDoc, DistributionEntry } from "./schema.js";

const PANEL = 360;
const MARGIN = 40;

export interface TrajectoriesOptions {
  /** restrict to one method (panel per matching entry) */
  method?: string;
  maxPanels?: number;
}

function ellipseSvg(
  frame: Frame,
  center: number[],
  cov: number[][],
  stroke: string,
  label: string,
): string {
  const e = covarianceEllipse(cov, 3);
  const cx = frame.x(center[0]);
  const cy = frame.y(center[1]);
  const deg = (-e.angle * 180) / Math.PI; // svg y-axis points down
  return (
    `<ellipse cx="${fmt(cx)}" cy="${fmt(cy)}" rx="${fmt(e.rx * frame.scale())}" ` +
    `ry="${fmt(e.ry * frame.scale())}" transform="rotate(${fmt(deg)} ${fmt(cx)} ${fmt(cy)})" ` +
    `fill="none" stroke="${stroke}" stroke-width="1.5" data-role="${label}"/>`
  );
}

function polyline(frame: Frame, points: number[][], stroke: string, width: number, role: string): string {
  if (points.length === 0) return "";
  const path = points.map((p) => `${fmt(frame.x(p[0]))},${fmt(frame.y(p[1]))}`).join(" ");
  return `<polyline points="${path}" fill="none" stroke="${stroke}" stroke-width="${width}" data-role="${role}"/>`;
}

function panel(entry: DistributionEntry, doc: DistributionsDoc, offsetX: number): string {
  const frame = new Frame(
    [doc.workspaceLo[0], doc.workspaceHi[0]],
    [doc.workspaceLo[1], doc.workspaceHi[1]],
    PANEL,
    PANEL,
    MARGIN,
  );
  const parts: string[] = [];
  parts.push(`<g transform="translate(${offsetX} 0)" data-method="${entry.method}" data-seed="${entry.seed}">`);
  parts.push(
    `<rect x="${MARGIN}" y="${MARGIN}" width="${PANEL - 2 * MARGIN}" height="${PANEL - 2 * MARGIN}" ` +
      `fill="none" stroke="#333" data-role="axes" data-extent="${doc.workspaceLo[0]},${doc.workspaceLo[1]},${doc.workspaceHi[0]},${doc.workspaceHi[1]}"/>`,
  );
  for (const trace of entry.rolloutTraces) {
    parts.push(polyline(frame, trace, "#9ecae1", 0.6, "rollout"));
  }
  parts.push(polyline(frame, entry.plannedMeanPath, "#d62728", 1.8, "planned-path"));
  parts.push(
    ellipseSvg(frame, entry.plannedTerminalMean, entry.plannedTerminalCov, "#d62728", "planned-ellipse"),
  );
  parts.push(
    ellipseSvg(
      frame,
      entry.empiricalTerminalMean,
      entry.empiricalTerminalCov,
      "#2ca02c",
      "empirical-ellipse",
    ),
  );
  parts.push(
    `<text x="${PANEL / 2}" y="${MARGIN - 12}" text-anchor="middle" font-size="13">` +
      `${entry.method} seed ${entry.seed} goal ${entry.goalIndex}</text>`,
  );
  parts.push("</g>");
  return parts.join("\n");
}

/** Render the trajectory overlay figure as an SVG string. */
export function renderTrajectories(doc: DistributionsDoc, options: TrajectoriesOptions = {}): string {
  let entries = doc.entries;
  if (options.method) {
    entries = entries.filter((e) => e.method === options.method);
  }
  const maxPanels = options.maxPanels ?? 4;
  entries = entries.slice(0, maxPanels);
  const width = Math.max(entries.length, 1) * PANEL;
  const body = entries.map((entry, i) => panel(entry, doc, i * PANEL)).join("\n");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${PANEL}" ` +
    `viewBox="0 0 ${width} ${PANEL}">\n${body}\n</svg>\n`
  );
}
