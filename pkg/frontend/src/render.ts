/**
 * Pure rasterizers: every function maps (bundle, view state) to RGBA
 * bytes with no hidden inputs, so identical state gives identical
 * pixels and snapshots are stable.
 */

import { VizBundle, GrayImage } from './bundle.js'
import { colormap, clipNormalize } from './colormap.js'

export interface Raster {
  width: number
  height: number
  /** RGBA, row-major, fully opaque. */
  data: Uint8ClampedArray
}

export interface ViewState {
  layer: number
  /** Hovered source patch index in [0, tokens), or null. */
  hover: number | null
  overlay: boolean
}

function blank(width: number, height: number): Raster {
  const data = new Uint8ClampedArray(width * height * 4)
  for (let i = 3; i < data.length; i += 4) data[i] = 255
  return { width, height, data }
}

function putPixel(r: Raster, x: number, y: number, rgb: readonly [number, number, number]): void {
  const o = 4 * (y * r.width + x)
  r.data[o] = rgb[0]
  r.data[o + 1] = rgb[1]
  r.data[o + 2] = rgb[2]
}

function fillCell(r: Raster, gx: number, gy: number, cellPx: number, rgb: readonly [number, number, number]): void {
  for (let y = gy * cellPx; y < (gy + 1) * cellPx; y++)
    for (let x = gx * cellPx; x < (gx + 1) * cellPx; x++) putPixel(r, x, y, rgb)
}

/** Nearest-neighbour grayscale blow-up of the bundle image to a square
 * raster of gridN*cellPx pixels per side. */
export function renderImage(image: GrayImage, gridN: number, cellPx: number): Raster {
  const side = gridN * cellPx
  const r = blank(side, side)
  for (let y = 0; y < side; y++) {
    const sy = Math.min(image.height - 1, Math.floor((y * image.height) / side))
    for (let x = 0; x < side; x++) {
      const sx = Math.min(image.width - 1, Math.floor((x * image.width) / side))
      const g = image.pixels[sy * image.width + sx]!
      putPixel(r, x, y, [g, g, g])
    }
  }
  return r
}

/**
 * Heatmap of one attention row: cell (gy, gx) shows how much the source
 * patch attends to patch gy*gridN+gx, clipped to [lo, hi] before
 * colormapping. The source patch gets a one-pixel white outline.
 */
export function renderAttentionMap(
  row: Float32Array,
  gridN: number,
  clip: readonly [number, number],
  sourcePatch: number,
  cellPx: number,
): Raster {
  if (row.length !== gridN * gridN)
    throw new RangeError(`attention row has ${row.length} values, grid wants ${gridN * gridN}`)
  const r = blank(gridN * cellPx, gridN * cellPx)
  for (let gy = 0; gy < gridN; gy++)
    for (let gx = 0; gx < gridN; gx++) {
      const v = row[gy * gridN + gx]!
      fillCell(r, gx, gy, cellPx, colormap(clipNormalize(v, clip[0], clip[1])))
    }
  if (sourcePatch >= 0 && sourcePatch < gridN * gridN) {
    const gx = sourcePatch % gridN
    const gy = Math.floor(sourcePatch / gridN)
    const x0 = gx * cellPx
    const y0 = gy * cellPx
    const white: [number, number, number] = [255, 255, 255]
    for (let x = x0; x < x0 + cellPx; x++) {
      putPixel(r, x, y0, white)
      putPixel(r, x, y0 + cellPx - 1, white)
    }
    for (let y = y0; y < y0 + cellPx; y++) {
      putPixel(r, x0, y, white)
      putPixel(r, x0 + cellPx - 1, y, white)
    }
  }
  return r
}

/** Blends the per-patch entropy grid over a raster. Entropies are
 * normalized against ln(tokens), the maximum a row can reach. */
export function overlayEntropy(
  base: Raster,
  entropy: Float32Array,
  gridN: number,
  cellPx: number,
  alpha = 0.55,
): Raster {
  const out: Raster = { width: base.width, height: base.height, data: new Uint8ClampedArray(base.data) }
  const maxE = Math.log(gridN * gridN)
  for (let gy = 0; gy < gridN; gy++)
    for (let gx = 0; gx < gridN; gx++) {
      const rgb = colormap(clipNormalize(entropy[gy * gridN + gx]!, 0, maxE))
      for (let y = gy * cellPx; y < (gy + 1) * cellPx; y++)
        for (let x = gx * cellPx; x < (gx + 1) * cellPx; x++) {
          const o = 4 * (y * out.width + x)
          out.data[o] = (1 - alpha) * out.data[o]! + alpha * rgb[0]
          out.data[o + 1] = (1 - alpha) * out.data[o + 1]! + alpha * rgb[1]
          out.data[o + 2] = (1 - alpha) * out.data[o + 2]! + alpha * rgb[2]
        }
    }
  return out
}

/**
 * Full view composition: the image by default, the hovered patch's
 * attention heatmap while hovering, and optionally the entropy overlay
 * for the current layer on top.
 */
export function renderView(bundle: VizBundle, state: ViewState, cellPx: number): Raster {
  const { grid_n, clip, tokens } = bundle.manifest
  let r: Raster
  if (state.hover !== null && state.hover >= 0 && state.hover < tokens) {
    const row = bundle.attention[state.layer]!.subarray(state.hover * tokens, (state.hover + 1) * tokens)
    r = renderAttentionMap(row, grid_n, clip, state.hover, cellPx)
  } else {
    r = renderImage(bundle.image, grid_n, cellPx)
  }
  if (state.overlay) r = overlayEntropy(r, bundle.entropy[state.layer]!, grid_n, cellPx)
  return r
}
