/**
 * Perceptual color ramp for heatmaps: a 10-anchor piecewise-linear
 * approximation of the familiar viridis palette (dark purple through
 * teal to yellow), chosen for monotone perceived brightness.
 */

const ANCHORS: ReadonlyArray<readonly [number, number, number]> = [
  [68, 1, 84],
  [72, 40, 120],
  [62, 73, 137],
  [49, 104, 142],
  [38, 130, 142],
  [31, 158, 137],
  [53, 183, 121],
  [110, 206, 88],
  [181, 222, 43],
  [253, 231, 37],
]

/** t in [0, 1] (clamped) -> [r, g, b] bytes. */
export function colormap(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t)) * (ANCHORS.length - 1)
  const i = Math.min(ANCHORS.length - 2, Math.floor(x))
  const f = x - i
  const lo = ANCHORS[i]!
  const hi = ANCHORS[i + 1]!
  return [
    Math.round(lo[0] + f * (hi[0] - lo[0])),
    Math.round(lo[1] + f * (hi[1] - lo[1])),
    Math.round(lo[2] + f * (hi[2] - lo[2])),
  ]
}

/** Maps a value into [0, 1] against a clip range; values outside the
 * range saturate, so everything above hi is rendered like hi. */
export function clipNormalize(value: number, lo: number, hi: number): number {
  if (value <= lo) return 0
  if (value >= hi) return 1
  return (value - lo) / (hi - lo)
}

/** Human-readable end labels for the colorbar, e.g. ["0", "0.005"]. */
export function clipLabels(clip: readonly [number, number]): [string, string] {
  return [String(clip[0]), String(clip[1])]
}
