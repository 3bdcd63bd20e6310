/**
 * View model for the explorer. Holds the only mutable state (current
 * layer, hovered patch, overlay flag) and turns interactions into state
 * changes; rendering stays in render.ts as a pure function.
 */

import { VizBundle } from './bundle.js'
import { Raster, ViewState, renderView } from './render.js'

export class Viewer {
  readonly bundle: VizBundle
  readonly cellPx: number
  private layer = 0
  private hover: number | null = null
  private overlay = false

  constructor(bundle: VizBundle, cellPx = 16) {
    if (cellPx < 3) throw new RangeError('cells need at least 3px for the outline')
    this.bundle = bundle
    this.cellPx = cellPx
  }

  get state(): ViewState {
    return { layer: this.layer, hover: this.hover, overlay: this.overlay }
  }

  /** Raster side length in pixels. */
  get side(): number {
    return this.bundle.manifest.grid_n * this.cellPx
  }

  /** 1-based, matching how layers are numbered in writing. */
  get layerLabel(): string {
    return `layer ${this.layer + 1}/${this.bundle.manifest.layers.length}`
  }

  /** Arrow keys switch layers (clamped); "e" toggles the entropy
   * overlay. Returns true when the view changed. */
  key(key: string): boolean {
    const last = this.bundle.manifest.layers.length - 1
    if (key === 'ArrowLeft') {
      if (this.layer === 0) return false
      this.layer--
      return true
    }
    if (key === 'ArrowRight') {
      if (this.layer === last) return false
      this.layer++
      return true
    }
    if (key === 'e' || key === 'E') {
      this.overlay = !this.overlay
      return true
    }
    return false
  }

  /** Raster coordinates -> hovered patch. Anything outside the raster
   * clears the hover instead of indexing out of bounds. */
  pointer(x: number, y: number): boolean {
    const { grid_n } = this.bundle.manifest
    let next: number | null = null
    if (x >= 0 && y >= 0 && x < this.side && y < this.side) {
      const gx = Math.floor(x / this.cellPx)
      const gy = Math.floor(y / this.cellPx)
      next = gy * grid_n + gx
    }
    if (next === this.hover) return false
    this.hover = next
    return true
  }

  pointerLeave(): boolean {
    if (this.hover === null) return false
    this.hover = null
    return true
  }

  render(): Raster {
    return renderView(this.bundle, this.state, this.cellPx)
  }
}
