#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'
import { ApplyMode, ExportJob, exportEmbeddings, exportMasks } from './export'

function jobFrom(argv: Record<string, unknown>): ExportJob {
  return {
    model: argv.model as string,
    dataset: argv.dataset as string,
    outRoot: argv.out as string,
    batchSize: argv.batchSize as number,
    mode: argv.mode as ApplyMode,
    targetH: argv.target as number,
    targetW: argv.target as number,
    gray: argv.gray as number,
  }
}

const shared = {
  model: { type: 'string' as const, demandOption: true, describe: 'Model id to run' },
  dataset: { type: 'string' as const, demandOption: true, describe: 'Dataset manifest path' },
  out: { type: 'string' as const, demandOption: true, describe: 'Output root' },
  'batch-size': { type: 'number' as const, default: 16 },
  mode: { choices: ['gray-crop', 'alpha'] as const, default: 'gray-crop' as const },
  target: { type: 'number' as const, default: 64, describe: 'Crop-resize target side' },
  gray: { type: 'number' as const, default: 0.5 },
}

yargs(hideBin(process.argv))
  .command(
    'masks',
    'Run a mask model and write per-candidate mask PNGs plus a manifest',
    shared,
    argv => {
      const result = exportMasks(jobFrom(argv))
      process.stdout.write(result.manifest + '\n')
    }
  )
  .command(
    'embeddings',
    'Encode applied masks and class prompts into OCE1 files',
    shared,
    argv => {
      const result = exportEmbeddings(jobFrom(argv))
      process.stdout.write(result.embeddings + '\n')
      if (result.classNames.length > 0) process.stdout.write(result.classEmbeddings + '\n')
    }
  )
  .demandCommand(1)
  .strict()
  .parse()
