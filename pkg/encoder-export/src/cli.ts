#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { MODELS } from './models.js'
import { runExport } from './exportJob.js'

yargs(hideBin(process.argv))
  .scriptName('encoder-export')
  .command(
    'export',
    'run a frozen encoder over an image folder and write an embedding manifest',
    y =>
      y
        .option('model', {
          type: 'string',
          demandOption: true,
          describe: 'encoder name, one of: ' + Object.keys(MODELS).join(', '),
        })
        .option('branch', {
          choices: ['pixel', 'spectrum'] as const,
          demandOption: true,
          describe: 'pixel reads png folders, spectrum reads .spec folders',
        })
        .option('blocks', {
          type: 'string',
          default: 'last',
          describe: "'last', 'all', or comma separated block indices",
        })
        .option('in', { type: 'string', demandOption: true, describe: 'input folder' })
        .option('labels', { type: 'string', demandOption: true, describe: 'labels sidecar (jsonl)' })
        .option('out', { type: 'string', demandOption: true, describe: 'output manifest path' })
        .option('batch-size', { type: 'number', default: 32 })
        .option('device', { type: 'string', default: 'cpu' }),
    async argv => {
      const result = await runExport({
        modelName: argv.model,
        inputDir: argv.in,
        branch: argv.branch,
        blocks: argv.blocks,
        batchSize: argv['batch-size'],
        deviceHint: argv.device,
        labelsPath: argv.labels,
        outPath: argv.out,
      })
      console.log(`wrote ${result.written} vectors (dimension ${result.dimension}) to ${result.outPath}`)
      if (result.skipped.length) {
        console.log(
          `skipped ${result.skipped.length} undecodable file(s), see ${result.outPath}.errors.jsonl`,
        )
      }
    },
  )
  .demandCommand(1, 'specify a command, e.g. export')
  .strict()
  .fail((msg, err) => {
    console.error('error: ' + (err ? err.message : msg))
    process.exit(1)
  })
  .parse()
