import * as fs from 'node:fs'

export interface ManifestRow {
  id: string
  label: 0 | 1
  generator: string
  branch: string
  sourcePath: string
  vector: Float64Array
}

const LABEL_STRINGS = ['real', 'fake'] as const

/** Write a manifest pair: the vectors file is one JSON header line
 * {"dimension", "count", "dtype": "f32"} followed by count rows of
 * dimension little-endian float32 values; metadata rows go to
 * <path>.meta.jsonl in the same order. Tokens are written exactly as
 * produced (no normalization). */
export function writeManifest(outPath: string, rows: ManifestRow[], dimension: number): void {
  const header = JSON.stringify({ dimension, count: rows.length, dtype: 'f32' }) + '\n'
  const payload = Buffer.alloc(4 * dimension * rows.length)
  rows.forEach((row, r) => {
    if (row.vector.length !== dimension) {
      throw new Error(`row ${row.id} has ${row.vector.length} values, expected ${dimension}`)
    }
    for (let c = 0; c < dimension; c++) {
      payload.writeFloatLE(row.vector[c], 4 * (r * dimension + c))
    }
  })
  fs.writeFileSync(outPath, Buffer.concat([Buffer.from(header, 'utf-8'), payload]))
  const meta = rows
    .map(row =>
      JSON.stringify({
        id: row.id,
        label: LABEL_STRINGS[row.label],
        generator: row.generator,
        branch: row.branch,
        source_path: row.sourcePath,
      }),
    )
    .join('\n')
  fs.writeFileSync(outPath + '.meta.jsonl', meta.length ? meta + '\n' : '', 'utf-8')
}

export interface ManifestMetaRow {
  id: string
  label: string
  generator: string
  branch: string
  source_path: string
}

export interface ManifestFile {
  dimension: number
  count: number
  vectors: Float32Array[]
  meta: ManifestMetaRow[]
}

/** Reader used by the tests; the production consumer is the primary
 * pipeline's own manifest loader. */
export function readManifestFile(outPath: string): ManifestFile {
  const buf = fs.readFileSync(outPath)
  const nl = buf.indexOf(0x0a)
  if (nl < 0) throw new Error('missing manifest header line')
  const header = JSON.parse(buf.toString('utf-8', 0, nl))
  const dimension = header.dimension as number
  const count = header.count as number
  const payload = buf.subarray(nl + 1)
  if (payload.length !== 4 * dimension * count) {
    throw new Error(`payload is ${payload.length} bytes, header implies ${4 * dimension * count}`)
  }
  const vectors: Float32Array[] = []
  for (let r = 0; r < count; r++) {
    const v = new Float32Array(dimension)
    for (let c = 0; c < dimension; c++) v[c] = payload.readFloatLE(4 * (r * dimension + c))
    vectors.push(v)
  }
  const meta = fs
    .readFileSync(outPath + '.meta.jsonl', 'utf-8')
    .split('\n')
    .filter(line => line.trim())
    .map(line => JSON.parse(line) as ManifestMetaRow)
  return { dimension, count, vectors, meta }
}
