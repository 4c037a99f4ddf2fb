export interface EncoderSpec {
  name: string
  /** input is resampled to grid x grid before patching */
  grid: number
  /** patch side; grid is a multiple of patch */
  patch: number
  /** class-token width, which is also the exported vector dimension */
  width: number
  /** number of blocks; one class token per block */
  depth: number
}

/** The supported frozen encoders, smallest first. All run everywhere; the
 * tiers trade feature detail against compute like the usual ViT ladders. */
export const MODELS: Record<string, EncoderSpec> = {
  'patch-tiny': { name: 'patch-tiny', grid: 32, patch: 8, width: 64, depth: 4 },
  'patch-small': { name: 'patch-small', grid: 48, patch: 8, width: 128, depth: 6 },
  'patch-base': { name: 'patch-base', grid: 64, patch: 8, width: 256, depth: 8 },
}

/** Unknown names are a fatal configuration error, not a per-file skip. */
export function resolveModel(name: string): EncoderSpec {
  const spec = MODELS[name]
  if (!spec) {
    throw new Error(`unknown encoder ${JSON.stringify(name)}; supported: ${Object.keys(MODELS).join(', ')}`)
  }
  return spec
}
