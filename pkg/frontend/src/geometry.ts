/** Covariance ellipse geometry for the position marginal. */

export interface EllipseParams {
  rx: number;
  ry: number;
  /** rotation of the first principal axis, radians */
  angle: number;
}

/**
 * Confidence ellipse of the 2x2 position marginal of a covariance matrix.
 * Radii are nSigma * sqrt(eigenvalue) along the principal axes.
 */
export function covarianceEllipse(cov: number[][], nSigma = 3): EllipseParams {
  const a = cov[0][0];
  const b = 0.5 * (cov[0][1] + cov[1][0]);
  const c = cov[1][1];
  const trace = a + c;
  const det = a * c - b * b;
  const disc = Math.sqrt(Math.max((trace * trace) / 4 - det, 0));
  const l1 = Math.max(trace / 2 + disc, 0);
  const l2 = Math.max(trace / 2 - disc, 0);
  let angle: number;
  if (Math.abs(b) < 1e-15) {
    angle = a >= c ? 0 : Math.PI / 2;
  } else {
    angle = Math.atan2(l1 - a, b);
  }
  return { rx: nSigma * Math.sqrt(l1), ry: nSigma * Math.sqrt(l2), angle };
}

/** Linear map from data coordinates to pixel coordinates (y flipped). */
export class Frame {
  constructor(
    readonly xRange: [number, number],
    readonly yRange: [number, number],
    readonly width: number,
    readonly height: number,
    readonly margin: number,
  ) {}

  x(value: number): number {
    const [lo, hi] = this.xRange;
    return this.margin + ((value - lo) / (hi - lo)) * (this.width - 2 * this.margin);
  }

  y(value: number): number {
    const [lo, hi] = this.yRange;
    return this.height - this.margin - ((value - lo) / (hi - lo)) * (this.height - 2 * this.margin);
  }

  /** scale for radii: data units to pixels along x */
  scale(): number {
    const [lo, hi] = this.xRange;
    return (this.width - 2 * this.margin) / (hi - lo);
  }
}

export function fmt(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(3);
}
