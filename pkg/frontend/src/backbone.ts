/**
 * Pretrained backbone wrapper that exposes intermediate stage outputs.
 *
 * Models are the standard tfjs artifact pair (model.json + weight shards),
 * produced by the converter / model zoo — weights are never vendored here.
 * Both layers-model and graph-model formats load; `layers` names either
 * layer names (layers model) or output node names (graph model). With the
 * default residual-18 backbone the ends of blocks 1-3 give 64/128/256
 * channels at 56/28/14 for a 224 input.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export const DEFAULT_LAYERS = ['b1', 'b2', 'b3']

export interface StageBackbone {
  layers: string[]
  /** NHWC batch in, one NHWC feature map per requested layer out. */
  run(batch: tf.Tensor4D): tf.Tensor4D[]
  dispose(): void
}

interface ModelDoc {
  format?: string
  modelTopology: {}
  weightsManifest: Array<{ paths: string[]; weights: tf.io.WeightsManifestEntry[] }>
}

function artifactsFromDisk(modelJson: string): tf.io.IOHandler {
  return {
    load: async () => {
      const doc: ModelDoc = JSON.parse(fs.readFileSync(modelJson, 'utf8'))
      const dir = path.dirname(modelJson)
      const specs: tf.io.WeightsManifestEntry[] = []
      const shards: Buffer[] = []
      for (const group of doc.weightsManifest) {
        specs.push(...group.weights)
        for (const p of group.paths) shards.push(fs.readFileSync(path.resolve(dir, p)))
      }
      const weightData = new Uint8Array(Buffer.concat(shards)).buffer
      return {
        modelTopology: doc.modelTopology,
        weightSpecs: specs,
        weightData,
        format: doc.format,
      }
    },
  }
}

export async function loadBackbone(modelJson: string, layers: string[]): Promise<StageBackbone> {
  if (layers.length === 0) throw new Error('at least one backbone layer is required')
  if (!fs.existsSync(modelJson)) {
    throw new Error(
      `backbone weights not found: ${modelJson} — fetch a tfjs model ` +
      '(model.json + weight shards) and pass its path with --model')
  }
  const doc: ModelDoc = JSON.parse(fs.readFileSync(modelJson, 'utf8'))
  if (doc.format === 'graph-model') {
    const model = await tf.loadGraphModel(artifactsFromDisk(modelJson))
    return {
      layers,
      run: batch => {
        const out = model.execute(batch, layers)
        return (Array.isArray(out) ? out : [out]) as tf.Tensor4D[]
      },
      dispose: () => model.dispose(),
    }
  }
  const base = await tf.loadLayersModel(artifactsFromDisk(modelJson))
  let outputs: tf.SymbolicTensor[]
  try {
    outputs = layers.map(name => base.getLayer(name).output as tf.SymbolicTensor)
  } catch {
    const known = base.layers.map(l => l.name).join(', ')
    throw new Error(`backbone has no such layer among [${layers}]; available: ${known}`)
  }
  const staged = tf.model({ inputs: base.inputs, outputs })
  return {
    layers,
    run: batch => {
      const out = staged.predict(batch)
      return (Array.isArray(out) ? out : [out]) as tf.Tensor4D[]
    },
    dispose: () => base.dispose(),
  }
}
