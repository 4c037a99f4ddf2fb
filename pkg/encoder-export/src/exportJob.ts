import * as fs from 'node:fs'
import * as path from 'node:path'

import { decodePng } from './png.js'
import { readSpectrumFile } from './spectrumFile.js'
import { resolveModel } from './models.js'
import { GrayImage, encodeToTokens, spectrumToGray, toGray } from './encoder.js'
import { loadLabelsFile } from './labels.js'
import { ManifestRow, writeManifest } from './manifest.js'

export interface ExportJob {
  modelName: string
  inputDir: string
  branch: 'pixel' | 'spectrum'
  /** 'last' (default), 'all', or comma separated zero-based block indices */
  blocks: string
  batchSize: number
  /** only cpu exists here; other hints fall back with a note */
  deviceHint: string
  labelsPath: string
  outPath: string
}

export interface SkippedFile {
  file: string
  error: string
}

export interface ExportResult {
  outPath: string
  written: number
  dimension: number
  skipped: SkippedFile[]
}

const PIXEL_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg'])
const SPECTRUM_EXTENSION = '.spec'

export function parseBlocks(selection: string, depth: number): number[] {
  const text = selection.trim().toLowerCase()
  if (text === '' || text === 'last') return [depth - 1]
  if (text === 'all') return Array.from({ length: depth }, (_, i) => i)
  const picks = text.split(',').map(part => {
    const idx = Number(part.trim())
    if (!Number.isInteger(idx) || idx < 0 || idx >= depth) {
      throw new Error(`block ${JSON.stringify(part.trim())} outside encoder depth ${depth}`)
    }
    return idx
  })
  return [...new Set(picks)].sort((a, b) => a - b)
}

function scanInputDir(inputDir: string, branch: 'pixel' | 'spectrum'): string[] {
  const names = fs.readdirSync(inputDir)
  const keep = names.filter(name => {
    const ext = path.extname(name).toLowerCase()
    return branch === 'pixel' ? PIXEL_EXTENSIONS.has(ext) : ext === SPECTRUM_EXTENSION
  })
  keep.sort()
  return keep
}

function loadGray(fullPath: string, branch: 'pixel' | 'spectrum'): GrayImage {
  if (branch === 'spectrum') {
    return spectrumToGray(readSpectrumFile(fullPath))
  }
  const ext = path.extname(fullPath).toLowerCase()
  if (ext === '.jpg' || ext === '.jpeg') {
    throw new Error('JPEG decoding not supported, re-encode as PNG')
  }
  return toGray(decodePng(fs.readFileSync(fullPath)))
}

/** Average the selected block tokens. Any selection therefore keeps the
 * manifest dimension equal to the model token width. */
function pickVector(tokens: Float64Array[], blocks: number[], width: number): Float64Array {
  if (blocks.length === 1) return tokens[blocks[0]]
  const out = new Float64Array(width)
  for (const b of blocks) {
    for (let c = 0; c < width; c++) out[c] += tokens[b][c]
  }
  for (let c = 0; c < width; c++) out[c] /= blocks.length
  return out
}

/** Run one export: scan the folder, encode every decodable file, write the
 * manifest pair plus (when needed) an errors sidecar listing the skips.
 *
 * Model resolution, block selection, label completeness and id collisions
 * are configuration errors and throw. Only per-file decode failures are
 * skips. */
export async function runExport(job: ExportJob): Promise<ExportResult> {
  const model = resolveModel(job.modelName)
  const blocks = parseBlocks(job.blocks, model.depth)
  if (job.deviceHint && job.deviceHint !== 'cpu') {
    console.error(`note: device ${job.deviceHint} unavailable, running on cpu`)
  }
  const files = scanInputDir(job.inputDir, job.branch)
  const labels = loadLabelsFile(job.labelsPath)
  const stems = new Set<string>()
  for (const f of files) {
    const stem = path.parse(f).name
    if (!labels.has(f) && !labels.has(stem)) {
      throw new Error(`no label entry for ${f}`)
    }
    if (stems.has(stem)) throw new Error(`duplicate id ${JSON.stringify(stem)} in input directory`)
    stems.add(stem)
  }

  const rows: ManifestRow[] = []
  const skipped: SkippedFile[] = []
  const batch = Math.max(1, Math.floor(job.batchSize) || 1)
  for (let start = 0; start < files.length; start += batch) {
    for (const f of files.slice(start, start + batch)) {
      const fullPath = path.join(job.inputDir, f)
      let gray: GrayImage
      try {
        gray = loadGray(fullPath, job.branch)
      } catch (e) {
        skipped.push({ file: f, error: (e as Error).message })
        continue
      }
      const tokens = encodeToTokens(gray, model, job.branch)
      const stem = path.parse(f).name
      const entry = (labels.get(f) ?? labels.get(stem))!
      rows.push({
        id: stem,
        label: entry.label,
        generator: entry.generator,
        branch: job.branch,
        sourcePath: fullPath,
        vector: pickVector(tokens, blocks, model.width),
      })
    }
  }

  writeManifest(job.outPath, rows, model.width)
  const errorsPath = job.outPath + '.errors.jsonl'
  if (fs.existsSync(errorsPath)) fs.unlinkSync(errorsPath)
  if (skipped.length) {
    const lines = skipped.map(s => JSON.stringify({ file: s.file, error: s.error }))
    fs.writeFileSync(errorsPath, lines.join('\n') + '\n', 'utf-8')
  }
  return { outPath: job.outPath, written: rows.length, dimension: model.width, skipped }
}
