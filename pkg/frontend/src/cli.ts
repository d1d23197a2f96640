#!/usr/bin/env node
/**
 * extract --input DIR --output DIR --model model.json
 *         [--resize 256] [--crop 224] [--layers b1,b2,b3] [--device cpu]
 *
 * Writes FTEN feature tensors and train/test manifests under --output and
 * prints the manifest paths. Exit 0 on success, 1 on any failure (bad
 * arguments, missing backbone weights, malformed input tree).
 */

import yargs from 'yargs'
import { DEFAULT_LAYERS, loadBackbone } from './backbone'
import { extract } from './extract'

export async function runCli(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .scriptName('extract')
    .usage('$0 --input DIR --output DIR --model model.json [options]')
    .option('input', {
      type: 'string', demandOption: true,
      describe: 'dataset root: one class dir or a directory of class dirs',
    })
    .option('output', {
      type: 'string', demandOption: true,
      describe: 'output root for tensors and manifests',
    })
    .option('model', {
      type: 'string', demandOption: true,
      describe: 'path to the pretrained backbone (tfjs model.json)',
    })
    .option('resize', { type: 'number', default: 256, describe: 'resize edge before cropping' })
    .option('crop', { type: 'number', default: 224, describe: 'center crop fed to the backbone' })
    .option('layers', {
      type: 'string', default: DEFAULT_LAYERS.join(','),
      describe: 'comma-separated backbone stage names to concatenate',
    })
    .option('device', { type: 'string', describe: 'tfjs backend hint (e.g. cpu)' })
    .strict()
    .exitProcess(false)
    .fail(false)

  let args
  try {
    args = await parser.parse()
  } catch (e) {
    console.error(`usage error: ${(e as Error).message}`)
    return 1
  }
  if (args.help) return 0

  const layers = args.layers.split(',').map(s => s.trim()).filter(s => s.length > 0)
  try {
    const backbone = await loadBackbone(args.model, layers)
    try {
      const manifests = await extract({
        inputDir: args.input,
        outputDir: args.output,
        resize: args.resize,
        crop: args.crop,
        layers,
        device: args.device,
      }, backbone)
      for (const m of manifests) console.log(m)
    } finally {
      backbone.dispose()
    }
    return 0
  } catch (e) {
    console.error(`error: ${(e as Error).message}`)
    return 1
  }
}

if (require.main === module) {
  runCli(process.argv.slice(2)).then(code => { process.exitCode = code })
}
