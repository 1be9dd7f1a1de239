#!/usr/bin/env node
/** CLI: `embed-export export --manifest m.csv --backbone NAME --out file.hsfm` */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'
import { backboneNames } from './backbones'
import { exportEmbeddings } from './exporter'

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('export', 'run a backbone over a manifest and write an HSFM-FS feature file', (cmd) =>
      cmd
        .option('manifest', { type: 'string', demandOption: true, describe: 'CSV with header path,label,group' })
        .option('backbone', { type: 'string', demandOption: true, describe: `one of: ${backboneNames().join(', ')}` })
        .option('out', { type: 'string', demandOption: true, describe: 'output feature file' })
        .option('batch-size', { type: 'number', default: 16 })
        .option('device', { type: 'string', default: 'cpu' })
        .option('dim', { type: 'number', describe: 'assert the embedding dimension' }),
    )
    .demandCommand(1)
    .strict()
    .help()
    .parse()

  const summary = await exportEmbeddings(
    argv.manifest as string,
    argv.backbone as string,
    argv.out as string,
    {
      batchSize: argv['batch-size'] as number,
      device: argv.device as string,
      dim: argv.dim as number | undefined,
    },
  )
  console.log(JSON.stringify(summary))
  return 0
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    console.error(`error: ${(err as Error).message}`)
    process.exit(1)
  })
