import * as zlib from 'node:zlib'

export interface RawImage {
  width: number
  height: number
  /** 1 gray, 2 gray+alpha, 3 rgb, 4 rgba */
  channels: number
  /** row-major 8-bit samples, length width * height * channels */
  data: Uint8Array
}

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a])

const CHANNELS_BY_COLOR_TYPE: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 }

/** Decode an 8-bit non-interlaced PNG (gray, gray+alpha, rgb or rgba).
 * Palette, 16-bit and interlaced files are rejected; callers treat any
 * throw as "undecodable" and skip the file. */
export function decodePng(buf: Buffer): RawImage {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(SIGNATURE)) {
    throw new Error('not a PNG file')
  }
  let width = 0
  let height = 0
  let channels = 0
  const idat: Buffer[] = []
  let sawEnd = false
  let pos = 8
  while (pos + 8 <= buf.length) {
    const length = buf.readUInt32BE(pos)
    const type = buf.toString('latin1', pos + 4, pos + 8)
    const body = buf.subarray(pos + 8, pos + 8 + length)
    if (body.length !== length) throw new Error(`truncated ${type} chunk`)
    if (type === 'IHDR') {
      width = body.readUInt32BE(0)
      height = body.readUInt32BE(4)
      const bitDepth = body[8]
      const colorType = body[9]
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`)
      if (!(colorType in CHANNELS_BY_COLOR_TYPE)) {
        throw new Error(`unsupported color type ${colorType}`)
      }
      if (body[12] !== 0) throw new Error('interlaced PNG not supported')
      channels = CHANNELS_BY_COLOR_TYPE[colorType]
    } else if (type === 'IDAT') {
      idat.push(body)
    } else if (type === 'IEND') {
      sawEnd = true
      break
    }
    pos += 12 + length
  }
  if (!width || !height || !channels) throw new Error('missing IHDR chunk')
  if (!sawEnd || idat.length === 0) throw new Error('missing image data')
  let raw: Buffer
  try {
    raw = zlib.inflateSync(Buffer.concat(idat))
  } catch (e) {
    throw new Error('corrupt image data: ' + (e as Error).message)
  }
  return unfilter(raw, width, height, channels)
}

function unfilter(raw: Buffer, width: number, height: number, channels: number): RawImage {
  const stride = width * channels
  if (raw.length !== height * (stride + 1)) {
    throw new Error('scanline data has wrong length')
  }
  const out = new Uint8Array(height * stride)
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)]
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1))
    const base = y * stride
    for (let x = 0; x < stride; x++) {
      const a = x >= channels ? out[base + x - channels] : 0
      const b = y > 0 ? out[base - stride + x] : 0
      const c = x >= channels && y > 0 ? out[base - stride + x - channels] : 0
      let v = row[x]
      switch (filter) {
        case 0:
          break
        case 1:
          v += a
          break
        case 2:
          v += b
          break
        case 3:
          v += (a + b) >> 1
          break
        case 4:
          v += paeth(a, b, c)
          break
        default:
          throw new Error(`bad filter byte ${filter}`)
      }
      out[base + x] = v & 0xff
    }
  }
  return { width, height, channels, data: out }
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c
  const pa = Math.abs(p - a)
  const pb = Math.abs(p - b)
  const pc = Math.abs(p - c)
  if (pa <= pb && pa <= pc) return a
  if (pb <= pc) return b
  return c
}

/** Encode as 8-bit non-interlaced PNG with filter 0 rows. Used by the probe
 * tooling and tests; the exporter itself only reads. */
export function encodePng(img: RawImage): Buffer {
  const colorType = { 1: 0, 2: 4, 3: 2, 4: 6 }[img.channels]
  if (colorType === undefined) {
    throw new Error(`cannot encode ${img.channels}-channel image`)
  }
  const stride = img.width * img.channels
  const raw = Buffer.alloc(img.height * (stride + 1))
  for (let y = 0; y < img.height; y++) {
    raw.set(img.data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1)
  }
  const ihdr = Buffer.alloc(13)
  ihdr.writeUInt32BE(img.width, 0)
  ihdr.writeUInt32BE(img.height, 4)
  ihdr[8] = 8
  ihdr[9] = colorType
  return Buffer.concat([
    SIGNATURE,
    chunk('IHDR', ihdr),
    chunk('IDAT', zlib.deflateSync(raw)),
    chunk('IEND', Buffer.alloc(0)),
  ])
}

export function flipHorizontal(img: RawImage): RawImage {
  const { width, height, channels, data } = img
  const out = new Uint8Array(data.length)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const src = (y * width + x) * channels
      const dst = (y * width + (width - 1 - x)) * channels
      for (let k = 0; k < channels; k++) out[dst + k] = data[src + k]
    }
  }
  return { width, height, channels, data: out }
}

function chunk(type: string, body: Buffer): Buffer {
  const out = Buffer.alloc(12 + body.length)
  out.writeUInt32BE(body.length, 0)
  out.write(type, 4, 'latin1')
  body.copy(out, 8)
  out.writeUInt32BE(crc32(out.subarray(4, 8 + body.length)), 8 + body.length)
  return out
}

let crcTable: Uint32Array | null = null

function crc32(buf: Buffer): number {
  if (!crcTable) {
    crcTable = new Uint32Array(256)
    for (let n = 0; n < 256; n++) {
      let c = n
      for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1
      crcTable[n] = c >>> 0
    }
  }
  let c = 0xffffffff
  for (let i = 0; i < buf.length; i++) {
    c = crcTable[(c ^ buf[i]) & 0xff] ^ (c >>> 8)
  }
  return (c ^ 0xffffffff) >>> 0
}
