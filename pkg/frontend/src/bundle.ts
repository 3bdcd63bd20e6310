/**
 * Loader for exported visualization bundles.
 *
 * A bundle directory holds manifest.json, a P5 grayscale image and, per
 * layer, two raw little-endian float32 files: the head-averaged T x T
 * attention matrix (row-major) and the T per-token entropies.
 */

export interface LayerFiles {
  attention: string
  entropy: string
}

export interface Manifest {
  grid_n: number
  tokens: number
  clip: [number, number]
  image: string
  layers: LayerFiles[]
}

export interface GrayImage {
  width: number
  height: number
  pixels: Uint8Array
}

export interface VizBundle {
  manifest: Manifest
  image: GrayImage
  /** One Float32Array of length tokens*tokens per layer. */
  attention: Float32Array[]
  /** One Float32Array of length tokens per layer. */
  entropy: Float32Array[]
}

/** Anything wrong with a bundle surfaces as this, never as a crash. */
export class BundleError extends Error {}

/** Resolves a file name inside the bundle to its bytes. */
export type Fetcher = (name: string) => Promise<ArrayBuffer>

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === 'object' && v !== null && !Array.isArray(v)
}

export function parseManifest(raw: unknown): Manifest {
  if (!isRecord(raw)) throw new BundleError('manifest is not an object')
  const { grid_n, tokens, clip, image, layers } = raw
  if (typeof grid_n !== 'number' || !Number.isInteger(grid_n) || grid_n <= 0)
    throw new BundleError('manifest grid_n must be a positive integer')
  if (tokens !== grid_n * grid_n)
    throw new BundleError(`manifest tokens ${tokens} != grid_n^2 ${grid_n * grid_n}`)
  if (
    !Array.isArray(clip) ||
    clip.length !== 2 ||
    typeof clip[0] !== 'number' ||
    typeof clip[1] !== 'number' ||
    !(clip[0] < clip[1])
  )
    throw new BundleError(`manifest clip must be [lo, hi] with lo < hi`)
  if (typeof image !== 'string') throw new BundleError('manifest image must be a file name')
  if (!Array.isArray(layers) || layers.length === 0)
    throw new BundleError('manifest needs at least one layer')
  const parsed: LayerFiles[] = layers.map((entry, i) => {
    if (!isRecord(entry) || typeof entry.attention !== 'string' || typeof entry.entropy !== 'string')
      throw new BundleError(`manifest layer ${i} needs attention and entropy file names`)
    return { attention: entry.attention, entropy: entry.entropy }
  })
  return { grid_n, tokens, clip: [clip[0], clip[1]], image, layers: parsed }
}

/** Little-endian float32 payload of a known element count. */
export function parseFloat32(buffer: ArrayBuffer, expected: number, name: string): Float32Array {
  if (buffer.byteLength !== 4 * expected)
    throw new BundleError(`${name}: ${buffer.byteLength} bytes, expected ${4 * expected}`)
  const view = new DataView(buffer)
  const out = new Float32Array(expected)
  for (let i = 0; i < expected; i++) {
    const v = view.getFloat32(4 * i, true)
    if (!Number.isFinite(v)) throw new BundleError(`${name}: non-finite value at index ${i}`)
    out[i] = v
  }
  return out
}

/** Binary PGM (P5, maxval 255). Header tokens may be split by any
 * whitespace and '#' comments run to end of line. */
export function parsePgm(buffer: ArrayBuffer): GrayImage {
  const bytes = new Uint8Array(buffer)
  let pos = 0
  const isSpace = (c: number) => c === 32 || c === 9 || c === 10 || c === 13
  const token = (): string => {
    while (pos < bytes.length) {
      if (bytes[pos] === 35) {
        while (pos < bytes.length && bytes[pos] !== 10) pos++
      } else if (isSpace(bytes[pos]!)) {
        pos++
      } else break
    }
    const start = pos
    while (pos < bytes.length && !isSpace(bytes[pos]!) && bytes[pos] !== 35) pos++
    if (start === pos) throw new BundleError('image: truncated PGM header')
    return String.fromCharCode(...bytes.subarray(start, pos))
  }
  if (token() !== 'P5') throw new BundleError('image: not a P5 PGM')
  const width = Number(token())
  const height = Number(token())
  const maxval = Number(token())
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0)
    throw new BundleError('image: bad PGM dimensions')
  if (maxval !== 255) throw new BundleError(`image: PGM maxval ${maxval}, expected 255`)
  pos++ // single whitespace byte after maxval
  const pixels = bytes.subarray(pos, pos + width * height)
  if (pixels.length !== width * height)
    throw new BundleError(`image: PGM payload holds ${pixels.length} pixels, expected ${width * height}`)
  return { width, height, pixels: new Uint8Array(pixels) }
}

export async function loadBundle(fetcher: Fetcher): Promise<VizBundle> {
  let manifestBytes: ArrayBuffer
  try {
    manifestBytes = await fetcher('manifest.json')
  } catch (err) {
    throw new BundleError(`cannot fetch manifest.json: ${String(err)}`)
  }
  let raw: unknown
  try {
    raw = JSON.parse(new TextDecoder().decode(manifestBytes))
  } catch {
    throw new BundleError('manifest.json is not valid JSON')
  }
  const manifest = parseManifest(raw)
  const t = manifest.tokens
  const fetchFile = async (name: string): Promise<ArrayBuffer> => {
    try {
      return await fetcher(name)
    } catch (err) {
      throw new BundleError(`cannot fetch ${name}: ${String(err)}`)
    }
  }
  const image = parsePgm(await fetchFile(manifest.image))
  const attention: Float32Array[] = []
  const entropy: Float32Array[] = []
  for (const layer of manifest.layers) {
    attention.push(parseFloat32(await fetchFile(layer.attention), t * t, layer.attention))
    entropy.push(parseFloat32(await fetchFile(layer.entropy), t, layer.entropy))
  }
  return { manifest, image, attention, entropy }
}
