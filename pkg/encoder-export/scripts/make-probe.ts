import * as fs from 'node:fs'
import * as path from 'node:path'

import { encodePng } from '../src/png.js'
import { probeImage } from '../src/probe.js'

// Regenerates the checked-in probe set. Output is fully deterministic, so
// rerunning this never changes the repository.
const outDir = process.argv[2] || path.join(process.cwd(), 'probe')
fs.mkdirSync(outDir, { recursive: true })
const labels: string[] = []
for (let i = 0; i < 50; i++) {
  const name = `probe_${String(i).padStart(2, '0')}.png`
  fs.writeFileSync(path.join(outDir, name), encodePng(probeImage(i)))
  labels.push(
    JSON.stringify({
      file: name,
      label: i % 2 ? 'fake' : 'real',
      generator: i % 2 ? 'probegen' : 'camera',
    }),
  )
}
fs.writeFileSync(path.join(outDir, 'labels.jsonl'), labels.join('\n') + '\n')
console.log(`wrote 50 probe images to ${outDir}`)
