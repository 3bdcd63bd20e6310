/**
 * Browser bootstrap: fetches the bundle next to the page (or from
 * ?bundle=<dir>), wires pointer and keyboard events to the view model
 * and blits rasters onto the canvas. Any load problem lands in the
 * error banner instead of a blank page.
 */

import { BundleError, loadBundle } from './bundle.js'
import { clipLabels } from './colormap.js'
import { Raster } from './render.js'
import { Viewer } from './viewer.js'

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing #${id}`)
  return el as T
}

function blit(canvas: HTMLCanvasElement, raster: Raster): void {
  canvas.width = raster.width
  canvas.height = raster.height
  const ctx = canvas.getContext('2d')
  if (!ctx) return
  // copy: ImageData insists on a plain ArrayBuffer-backed array
  const data = new Uint8ClampedArray(raster.data)
  ctx.putImageData(new ImageData(data, raster.width, raster.height), 0, 0)
}

async function boot(): Promise<void> {
  const canvas = byId<HTMLCanvasElement>('view')
  const label = byId<HTMLElement>('layer-label')
  const banner = byId<HTMLElement>('banner')
  const dir = new URLSearchParams(location.search).get('bundle') ?? '.'
  let viewer: Viewer
  try {
    const bundle = await loadBundle(async (name) => {
      const resp = await fetch(`${dir}/${name}`)
      if (!resp.ok) throw new Error(`${resp.status} ${resp.statusText}`)
      return resp.arrayBuffer()
    })
    viewer = new Viewer(bundle)
  } catch (err) {
    banner.textContent = err instanceof BundleError ? `bad bundle: ${err.message}` : String(err)
    banner.hidden = false
    return
  }

  const [lo, hi] = clipLabels(viewer.bundle.manifest.clip)
  byId('clip-lo').textContent = lo
  byId('clip-hi').textContent = hi

  const refresh = () => {
    blit(canvas, viewer.render())
    label.textContent = viewer.layerLabel
  }
  canvas.addEventListener('mousemove', (e) => {
    const rect = canvas.getBoundingClientRect()
    const x = ((e.clientX - rect.left) / rect.width) * viewer.side
    const y = ((e.clientY - rect.top) / rect.height) * viewer.side
    if (viewer.pointer(x, y)) refresh()
  })
  canvas.addEventListener('mouseleave', () => {
    if (viewer.pointerLeave()) refresh()
  })
  window.addEventListener('keydown', (e) => {
    if (viewer.key(e.key)) {
      e.preventDefault()
      refresh()
    }
  })
  refresh()
}

boot().catch((err) => console.error(err))
