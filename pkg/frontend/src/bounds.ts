/** The two branches of the variational KL risk bound, recomputed here only
 * for the crossover figure's dense grid. The formulas (and the order of
 * operations) mirror the Python pipeline exactly so shared grid points agree
 * to double-precision rounding. */

export function momentBound(empRisk: number, bTerm: number): number {
  return empRisk + bTerm + Math.sqrt(bTerm * (bTerm + 2.0 * empRisk));
}

export function pinskerBound(empRisk: number, bTerm: number): number {
  return empRisk + Math.sqrt(bTerm / 2.0);
}

export function variationalBound(empRisk: number, bTerm: number): number {
  return Math.min(1.0, Math.max(0.0, Math.min(momentBound(empRisk, bTerm), pinskerBound(empRisk, bTerm))));
}

export interface CrossoverPoint {
  rHat: number;
  b: number;
  moment: number;
  pinsker: number;
}

/** Dense grid of both branches at the two empirical-risk levels shown in the
 * crossover figure. */
export function crossoverGrid(
  rHats: number[] = [0.1, 0.01],
  bMin = 1e-4,
  bMax = 1.0,
  points = 200
): CrossoverPoint[] {
  const out: CrossoverPoint[] = [];
  const l0 = Math.log(bMin);
  const l1 = Math.log(bMax);
  for (const rHat of rHats) {
    for (let i = 0; i < points; i++) {
      const b = Math.exp(l0 + (i * (l1 - l0)) / (points - 1));
      out.push({ rHat, b, moment: momentBound(rHat, b), pinsker: pinskerBound(rHat, b) });
    }
  }
  return out;
}
