import { RawImage } from './png.js'
import { mulberry32 } from './rng.js'

/** Smooth cosine-mixture probe image. Each index gets its own set of low
 * frequency waves, so different probes decorrelate under the encoder while
 * an image and its flip stay close. */
export function probeImage(index: number, size = 28): RawImage {
  const rand = mulberry32(0xabc0 + index * 101)
  const waves: { fx: number; fy: number; phase: number; amp: number }[] = []
  for (let w = 0; w < 5; w++) {
    waves.push({
      fx: (rand() * 4 + 0.5) / size,
      fy: (rand() * 4 + 0.5) / size,
      phase: rand() * Math.PI * 2,
      amp: 0.5 + rand(),
    })
  }
  const data = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      let v = 0
      for (const w of waves) {
        v += w.amp * Math.cos(2 * Math.PI * (w.fx * x + w.fy * y) + w.phase)
      }
      const tone = Math.max(0, Math.min(255, Math.round(128 + 40 * v)))
      const o = (y * size + x) * 3
      data[o] = tone
      data[o + 1] = Math.max(0, Math.min(255, tone + ((x * 7 + index) % 23) - 11))
      data[o + 2] = 255 - tone
    }
  }
  return { width: size, height: size, channels: 3, data }
}
