// Display formatting. Comparisons in tests run against these strings, so
// keep them stable.

export function fmtCost(value: number): string {
  return `${value.toFixed(3)} U`;
}

export function fmtParams(speed: number, feed: number): string {
  return `${speed.toFixed(2)} m/s @ ${feed.toFixed(2)} mm/min`;
}

export function fmtProbability(value: number): string {
  return `${(value * 100).toFixed(1)}%`;
}

export function fmtHalfwidth(value: number | null): string {
  return value === null ? "n/a" : `${value.toFixed(4)} U`;
}

// Form validation mirrors the service-side bounds so a valid form never
// earns a 422 for range errors.
export function validateOutcomeField(name: string, raw: string): number {
  const value = Number(raw);
  if (!Number.isFinite(value) || value <= 0) {
    throw new Error(`${name} must be a positive number`);
  }
  return value;
}

export function validateProbability(raw: string | number): number {
  const value = Number(raw);
  if (!Number.isFinite(value) || value <= 0 || value >= 1) {
    throw new Error("minimal probabilities must lie strictly between 0 and 1");
  }
  return value;
}
