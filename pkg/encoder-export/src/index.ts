export { MODELS, resolveModel } from './models.js'
export type { EncoderSpec } from './models.js'
export { encodeToTokens, resizeBilinear, spectrumToGray, toGray } from './encoder.js'
export type { GrayImage } from './encoder.js'
export { decodePng, encodePng, flipHorizontal } from './png.js'
export type { RawImage } from './png.js'
export { readSpectrumFile, writeSpectrumFile } from './spectrumFile.js'
export type { SpectrumGrid } from './spectrumFile.js'
export { loadLabelsFile } from './labels.js'
export type { LabelEntry } from './labels.js'
export { readManifestFile, writeManifest } from './manifest.js'
export type { ManifestFile, ManifestRow } from './manifest.js'
export { parseBlocks, runExport } from './exportJob.js'
export type { ExportJob, ExportResult, SkippedFile } from './exportJob.js'
export { probeImage } from './probe.js'
