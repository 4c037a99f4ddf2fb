import * as fs from 'node:fs'

/** A stored frequency grid: one JSON header line, then height * width *
 * channels little-endian float64 values in row-major order. */
export interface SpectrumGrid {
  height: number
  width: number
  channels: number
  data: Float64Array
}

export function readSpectrumFile(specPath: string): SpectrumGrid {
  const buf = fs.readFileSync(specPath)
  const nl = buf.indexOf(0x0a)
  if (nl < 0) throw new Error('missing spectrum header line')
  let header: { height?: unknown; width?: unknown; channels?: unknown }
  try {
    header = JSON.parse(buf.toString('utf-8', 0, nl))
  } catch (e) {
    throw new Error('unreadable spectrum header: ' + (e as Error).message)
  }
  const height = Number(header.height) | 0
  const width = Number(header.width) | 0
  const channels = Number(header.channels) | 0
  if (height < 1 || width < 1 || channels < 1) {
    throw new Error('bad spectrum header fields')
  }
  const payload = buf.subarray(nl + 1)
  const expected = 8 * height * width * channels
  if (payload.length !== expected) {
    throw new Error(`spectrum payload is ${payload.length} bytes, header implies ${expected}`)
  }
  const data = new Float64Array(height * width * channels)
  for (let i = 0; i < data.length; i++) data[i] = payload.readDoubleLE(i * 8)
  return { height, width, channels, data }
}

/** Writer counterpart, used by tests and fixture tooling. */
export function writeSpectrumFile(specPath: string, grid: SpectrumGrid): void {
  const header =
    JSON.stringify({
      height: grid.height,
      width: grid.width,
      channels: grid.channels,
      dtype: 'f64',
      source_id: '',
      log_scaled: true,
      center_shifted: true,
    }) + '\n'
  const payload = Buffer.alloc(8 * grid.data.length)
  for (let i = 0; i < grid.data.length; i++) payload.writeDoubleLE(grid.data[i], i * 8)
  fs.writeFileSync(specPath, Buffer.concat([Buffer.from(header, 'utf-8'), payload]))
}
