/** Deterministic 32-bit PRNG (mulberry32). Integer arithmetic only, so the
 * sequence is identical on every platform and every run. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return function () {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** FNV-1a hash of a string, used to derive weight seeds from names. */
export function hashString(text: string): number {
  let h = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i)
    h = Math.imul(h, 0x01000193)
  }
  return h >>> 0
}

const matrixCache = new Map<string, Float64Array>()

/** Row-major matrix with entries uniform on +-sqrt(3/cols), so a row dotted
 * with a unit-scale vector stays unit scale. Cached per (shape, seed): the
 * same weights are reused for every image in a batch. */
export function seededMatrix(rows: number, cols: number, seed: number): Float64Array {
  const key = `${rows}x${cols}:${seed}`
  const hit = matrixCache.get(key)
  if (hit) return hit
  const rand = mulberry32(seed)
  const scale = Math.sqrt(3 / cols)
  const out = new Float64Array(rows * cols)
  for (let i = 0; i < out.length; i++) {
    out[i] = (rand() * 2 - 1) * scale
  }
  matrixCache.set(key, out)
  return out
}
