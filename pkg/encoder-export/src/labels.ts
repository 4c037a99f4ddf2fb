import * as fs from 'node:fs'
import * as path from 'node:path'

export interface LabelEntry {
  label: 0 | 1
  generator: string
}

const LABEL_CODES: Record<string, 0 | 1> = { real: 0, fake: 1 }

/** Read a labels sidecar: JSONL rows {"file", "label": "real"|"fake",
 * "generator"?}. Entries are indexed by file name and by stem, so one
 * labels file serves both a raw folder and its spectrum derivatives. */
export function loadLabelsFile(labelsPath: string): Map<string, LabelEntry> {
  const out = new Map<string, LabelEntry>()
  const text = fs.readFileSync(labelsPath, 'utf-8')
  const lines = text.split('\n')
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim()
    if (!line) continue
    let obj: { file?: unknown; label?: unknown; generator?: unknown }
    try {
      obj = JSON.parse(line)
    } catch (e) {
      throw new Error(`${labelsPath}:${i + 1}: bad JSON: ${(e as Error).message}`)
    }
    if (typeof obj.file !== 'string' || typeof obj.label !== 'string' || !(obj.label in LABEL_CODES)) {
      throw new Error(`${labelsPath}:${i + 1}: needs a "file" and a real/fake "label"`)
    }
    const entry: LabelEntry = {
      label: LABEL_CODES[obj.label],
      generator: obj.generator == null ? '' : String(obj.generator),
    }
    out.set(obj.file, entry)
    const stem = path.parse(obj.file).name
    if (!out.has(stem)) out.set(stem, entry)
  }
  return out
}
