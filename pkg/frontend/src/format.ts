/**
 * Rendering of API values.
 *
 * Numbers are displayed exactly as the payload carries them, byte for byte.
 * Both the service and this client compute the same shortest round-trip
 * digits for a double; only the surface formatting differs (the service
 * switches to scientific notation below 1e-4 and keeps a trailing ".0" on
 * integral floats). renderNumber replicates those formatting rules, so the
 * rendered text equals the JSON literal the service wrote. Nothing is
 * recomputed or rounded client-side.
 */

export function renderNumber(value: number | null): string {
  if (value === null) {
    return "–";
  }
  if (!Number.isFinite(value)) {
    return String(value);
  }
  if (value === 0) {
    return Object.is(value, -0) ? "-0.0" : "0.0";
  }
  const magnitude = Math.abs(value);
  if (magnitude >= 1e16 || magnitude < 1e-4) {
    // scientific, with the exponent padded to two digits
    return value.toExponential().replace(/e([+-])(\d)$/, "e$10$2");
  }
  return Number.isInteger(value) ? value.toFixed(1) : String(value);
}

export function renderTimestamp(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").replace(".000Z", "Z");
}
