import { readFile } from 'node:fs/promises'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'

import { Fetcher, VizBundle, loadBundle } from '../src/bundle.js'

export const FIXTURE_DIR = join(dirname(fileURLToPath(import.meta.url)), 'fixtures', 'bundle')

/** Serves bundle files from disk the way fetch() would over HTTP. */
export function diskFetcher(dir: string, overrides: Record<string, Uint8Array> = {}): Fetcher {
  return async (name) => {
    const bytes = name in overrides ? overrides[name]! : new Uint8Array(await readFile(join(dir, name)))
    return bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer
  }
}

export function loadFixture(overrides: Record<string, Uint8Array> = {}): Promise<VizBundle> {
  return loadBundle(diskFetcher(FIXTURE_DIR, overrides))
}

export function bytes(text: string): Uint8Array {
  return new TextEncoder().encode(text)
}
