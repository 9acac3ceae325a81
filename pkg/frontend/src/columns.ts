/** Likelihood column-graph model: one column per class, ordered by
 * class name, heights carrying the service's values untouched. */

export interface LikelihoodColumn {
  cls: string;
  value: number;
}

export function likelihoodColumns(likelihoods: Record<string, number>): LikelihoodColumn[] {
  return Object.keys(likelihoods)
    .sort()
    .map((cls) => ({ cls, value: likelihoods[cls] as number }));
}

/** Service contract passthrough: rendered likelihoods must sum to 1. */
export function sumsToOne(columns: LikelihoodColumn[], tolerance = 1e-6): boolean {
  const total = columns.reduce((acc, c) => acc + c.value, 0);
  return Math.abs(total - 1) <= tolerance;
}
