/** Per-method distribution of the plan-accuracy metric.
 *
 * Values above the display cutoff (1.0) are excluded from the strip plot but
 * counted in a caption annotation. Method order is fixed.
 */

import { Frame, fmt } from "./geometry.js";
import { METHOD_ORDER, MetricsRow, ParseError } from "./schema.js";

const WIDTH = 520;
const HEIGHT = 360;
const MARGIN = 50;
export const W2_DISPLAY_CUTOFF = 1.0;

function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

/** Render the metric distribution figure as an SVG string. */
export function renderW2Distribution(rows: MetricsRow[]): string {
  const present = new Set(rows.map((r) => r.method));
  const methods = METHOD_ORDER.filter((m) => present.has(m));
  if (methods.length === 0) {
    throw new ParseError("metrics csv: no known methods among rows");
  }
  const byMethod = new Map<string, number[]>(methods.map((m) => [m]).map(([m]) => [m, []]));
  let excluded = 0;
  for (const row of rows) {
    if (row.w2 === null || !byMethod.has(row.method)) continue;
    if (row.w2 > W2_DISPLAY_CUTOFF) {
      excluded += 1;
      continue;
    }
    byMethod.get(row.method)!.push(row.w2);
  }
  const shown = [...byMethod.values()].flat();
  const yMax = shown.length ? Math.max(...shown) * 1.1 + 1e-9 : 1.0;
  const frame = new Frame([0, methods.length], [0, yMax], WIDTH, HEIGHT, MARGIN);

  const parts: string[] = [];
  parts.push(
    `<rect x="${MARGIN}" y="${MARGIN}" width="${WIDTH - 2 * MARGIN}" height="${HEIGHT - 2 * MARGIN}" fill="none" stroke="#333" data-role="axes"/>`,
  );
  methods.forEach((method, idx) => {
    const values = byMethod.get(method)!;
    const centerX = frame.x(idx + 0.5);
    values.forEach((value, j) => {
      // deterministic horizontal fan-out instead of random jitter
      const offset = ((j % 9) - 4) * 4;
      parts.push(
        `<circle cx="${fmt(centerX + offset)}" cy="${fmt(frame.y(value))}" r="2.4" ` +
          `fill="#1f77b4" fill-opacity="0.7" data-method="${method}" data-value="${value}"/>`,
      );
    });
    if (values.length) {
      const m = median(values);
      parts.push(
        `<line x1="${fmt(centerX - 22)}" x2="${fmt(centerX + 22)}" y1="${fmt(frame.y(m))}" ` +
          `y2="${fmt(frame.y(m))}" stroke="#d62728" stroke-width="2" data-role="median" data-method="${method}"/>`,
      );
    }
    parts.push(
      `<text x="${fmt(centerX)}" y="${HEIGHT - MARGIN + 18}" text-anchor="middle" font-size="12">${method}</text>`,
    );
  });
  parts.push(
    `<text x="${WIDTH / 2}" y="${HEIGHT - 8}" text-anchor="middle" font-size="11" data-role="caption">` +
      `plan accuracy per method; ${excluded} value(s) above ${W2_DISPLAY_CUTOFF} not shown</text>`,
  );
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
    `viewBox="0 0 ${WIDTH} ${HEIGHT}">\n${parts.join("\n")}\n</svg>\n`
  );
}
