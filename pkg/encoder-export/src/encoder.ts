import { RawImage } from './png.js'
import { SpectrumGrid } from './spectrumFile.js'
import { EncoderSpec } from './models.js'
import { hashString, seededMatrix } from './rng.js'

export interface GrayImage {
  width: number
  height: number
  data: Float64Array
}

/** Stats tracked per patch: mean, std, mean |dx|, mean |dy|, min, max.
 * Every one of them is invariant to mirroring the patch contents, which is
 * what gives the exported tokens their flip robustness. */
const STATS = 6

/** Fraction of each token taken from the mirror-antisymmetric part of the
 * patch field. Small, so a flipped image stays close to its original while
 * unequal images still separate. */
const ASYM_WEIGHT = 0.2

/** Tiny fixed offset shared by all tokens of a block so a perfectly uniform
 * input still exports a nonzero vector. */
const BIAS_WEIGHT = 0.01

export function toGray(img: RawImage): GrayImage {
  const { width, height, channels, data } = img
  const out = new Float64Array(width * height)
  for (let i = 0; i < width * height; i++) {
    const o = i * channels
    let v: number
    if (channels >= 3) {
      v = 0.299 * data[o] + 0.587 * data[o + 1] + 0.114 * data[o + 2]
    } else {
      v = data[o]
    }
    out[i] = v / 255
  }
  return { width, height, data: out }
}

export function spectrumToGray(spec: SpectrumGrid): GrayImage {
  const { width, height, channels, data } = spec
  const out = new Float64Array(width * height)
  for (let i = 0; i < width * height; i++) {
    let s = 0
    for (let k = 0; k < channels; k++) s += data[i * channels + k]
    out[i] = s / channels
  }
  return { width, height, data: out }
}

/** Bilinear resample to size x size with half-pixel centers and clamped
 * edges. Sampling positions are mirror-symmetric, so resizing commutes with
 * a horizontal flip of the input. */
export function resizeBilinear(img: GrayImage, size: number): GrayImage {
  const out = new Float64Array(size * size)
  const sx = img.width / size
  const sy = img.height / size
  const clampX = (i: number) => Math.max(0, Math.min(img.width - 1, i))
  const clampY = (i: number) => Math.max(0, Math.min(img.height - 1, i))
  for (let j = 0; j < size; j++) {
    const yPos = (j + 0.5) * sy - 0.5
    const yf = Math.floor(yPos)
    const fy = yPos - yf
    const y0 = clampY(yf)
    const y1 = clampY(yf + 1)
    for (let i = 0; i < size; i++) {
      const xPos = (i + 0.5) * sx - 0.5
      const xf = Math.floor(xPos)
      const fx = xPos - xf
      const x0 = clampX(xf)
      const x1 = clampX(xf + 1)
      const top = img.data[y0 * img.width + x0] * (1 - fx) + img.data[y0 * img.width + x1] * fx
      const bot = img.data[y1 * img.width + x0] * (1 - fx) + img.data[y1 * img.width + x1] * fx
      out[j * size + i] = top * (1 - fy) + bot * fy
    }
  }
  return { width: size, height: size, data: out }
}

function patchField(grid: GrayImage, patch: number): Float64Array {
  const gp = grid.width / patch
  const field = new Float64Array(gp * gp * STATS)
  const n = patch * patch
  for (let pj = 0; pj < gp; pj++) {
    for (let pi = 0; pi < gp; pi++) {
      let sum = 0
      let sumSq = 0
      let gx = 0
      let gy = 0
      let lo = Infinity
      let hi = -Infinity
      for (let y = 0; y < patch; y++) {
        for (let x = 0; x < patch; x++) {
          const idx = (pj * patch + y) * grid.width + (pi * patch + x)
          const v = grid.data[idx]
          sum += v
          sumSq += v * v
          if (v < lo) lo = v
          if (v > hi) hi = v
          if (x + 1 < patch) gx += Math.abs(grid.data[idx + 1] - v)
          if (y + 1 < patch) gy += Math.abs(grid.data[idx + grid.width] - v)
        }
      }
      const mean = sum / n
      const variance = Math.max(0, sumSq / n - mean * mean)
      const o = (pj * gp + pi) * STATS
      field[o] = mean
      field[o + 1] = Math.sqrt(variance)
      field[o + 2] = gx / (patch * (patch - 1))
      field[o + 3] = gy / (patch * (patch - 1))
      field[o + 4] = lo
      field[o + 5] = hi
    }
  }
  return field
}

/** Remove the per-image spatial mean of each stat channel. Kills the shared
 * brightness/contrast component that would otherwise make every pair of
 * images look similar. */
function centerField(field: Float64Array, gp: number): void {
  const cells = gp * gp
  for (let k = 0; k < STATS; k++) {
    let mean = 0
    for (let p = 0; p < cells; p++) mean += field[p * STATS + k]
    mean /= cells
    for (let p = 0; p < cells; p++) field[p * STATS + k] -= mean
  }
}

/** 3x3 neighborhood average over valid cells. The kernel is left-right
 * symmetric, so smoothing commutes with a horizontal flip of the field. */
function smoothField(field: Float64Array, gp: number): Float64Array {
  const out = new Float64Array(field.length)
  for (let pj = 0; pj < gp; pj++) {
    for (let pi = 0; pi < gp; pi++) {
      for (let k = 0; k < STATS; k++) {
        let acc = 0
        let count = 0
        for (let dj = -1; dj <= 1; dj++) {
          for (let di = -1; di <= 1; di++) {
            const nj = pj + dj
            const ni = pi + di
            if (nj < 0 || nj >= gp || ni < 0 || ni >= gp) continue
            acc += field[(nj * gp + ni) * STATS + k]
            count++
          }
        }
        out[(pj * gp + pi) * STATS + k] = acc / count
      }
    }
  }
  return out
}

function mixField(field: Float64Array, gp: number, mix: Float64Array): Float64Array {
  const out = new Float64Array(field.length)
  const cells = gp * gp
  for (let p = 0; p < cells; p++) {
    for (let r = 0; r < STATS; r++) {
      let acc = field[p * STATS + r]
      for (let c = 0; c < STATS; c++) {
        acc += field[p * STATS + c] * mix[r * STATS + c]
      }
      out[p * STATS + r] = Math.tanh(acc)
    }
  }
  return out
}

function blockToken(
  field: Float64Array,
  gp: number,
  spec: EncoderSpec,
  branch: string,
  block: number,
): Float64Array {
  const len = gp * gp * STATS
  const sym = new Float64Array(len)
  const asym = new Float64Array(len)
  for (let pj = 0; pj < gp; pj++) {
    for (let pi = 0; pi < gp; pi++) {
      for (let k = 0; k < STATS; k++) {
        const o = (pj * gp + pi) * STATS + k
        const m = (pj * gp + (gp - 1 - pi)) * STATS + k
        sym[o] = (field[o] + field[m]) / 2
        asym[o] = (field[o] - field[m]) / 2
      }
    }
  }
  const wSym = seededMatrix(spec.width, len, hashString(`${spec.name}|${branch}|sym|${block}`))
  const wAsym = seededMatrix(spec.width, len, hashString(`${spec.name}|${branch}|asym|${block}`))
  const bias = seededMatrix(spec.width, 1, hashString(`${spec.name}|${branch}|bias|${block}`))
  const out = new Float64Array(spec.width)
  for (let r = 0; r < spec.width; r++) {
    let acc = BIAS_WEIGHT * bias[r]
    const row = r * len
    for (let c = 0; c < len; c++) {
      acc += wSym[row + c] * sym[c] + ASYM_WEIGHT * wAsym[row + c] * asym[c]
    }
    out[r] = acc
  }
  return out
}

/** Run the frozen encoder and return one class token per block, in block
 * order. Weights depend only on (model, branch, block), never on the data,
 * so identical inputs always produce identical tokens. */
export function encodeToTokens(gray: GrayImage, spec: EncoderSpec, branch: string): Float64Array[] {
  const resized = resizeBilinear(gray, spec.grid)
  const gp = spec.grid / spec.patch
  let field = patchField(resized, spec.patch)
  centerField(field, gp)
  const tokens: Float64Array[] = []
  for (let b = 0; b < spec.depth; b++) {
    field = smoothField(field, gp)
    const mix = seededMatrix(STATS, STATS, hashString(`${spec.name}|${branch}|mix|${b}`))
    field = mixField(field, gp, mix)
    tokens.push(blockToken(field, gp, spec, branch, b))
  }
  return tokens
}
