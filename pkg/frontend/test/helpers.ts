import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { PNG } from 'pngjs'

/** Small deterministic byte stream so test images are stable across runs. */
export function lcg(seed: number): () => number {
  let s = seed >>> 0
  return () => {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0
    return s >>> 24
  }
}

export function writePng(
  file: string, width: number, height: number,
  pixel: (x: number, y: number) => [number, number, number],
): void {
  const png = new PNG({ width, height })
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y)
      const i = 4 * (y * width + x)
      png.data[i] = r
      png.data[i + 1] = g
      png.data[i + 2] = b
      png.data[i + 3] = 255
    }
  }
  fs.mkdirSync(path.dirname(file), { recursive: true })
  fs.writeFileSync(file, PNG.sync.write(png))
}

export function writeNoisePng(file: string, size: number, seed: number): void {
  const next = lcg(seed)
  writePng(file, size, size, () => [next(), next(), next()])
}

/**
 * One object class in the documented layout: 3 train/good images (one of
 * them corrupt), 2 test/good, 2 test/scratch with ground-truth masks.
 */
export function makeClassTree(dir: string, seed = 1): void {
  writeNoisePng(path.join(dir, 'train/good/000.png'), 80, seed)
  writeNoisePng(path.join(dir, 'train/good/001.png'), 80, seed + 1)
  fs.mkdirSync(path.join(dir, 'train/good'), { recursive: true })
  fs.writeFileSync(path.join(dir, 'train/good/002.png'), Buffer.from('not a png at all'))
  writeNoisePng(path.join(dir, 'test/good/000.png'), 80, seed + 2)
  writeNoisePng(path.join(dir, 'test/good/001.png'), 80, seed + 3)
  for (const stem of ['000', '001']) {
    writeNoisePng(path.join(dir, `test/scratch/${stem}.png`), 80, seed + 10 + Number(stem))
    writePng(path.join(dir, `ground_truth/scratch/${stem}_mask.png`), 80, 80,
             (x, y) => (x > 40 && y > 20 ? [255, 255, 255] : [0, 0, 0]))
  }
}

/**
 * Save a three-stage conv net in the standard tfjs layers-model format.
 * Stage ends are named b1/b2/b3 like the real backbone config expects:
 * 56x56x3 input -> 14x14x4 -> 7x7x8 -> 4x4x8.
 */
export async function saveTinyBackbone(dir: string): Promise<string> {
  const input = tf.input({ shape: [56, 56, 3] })
  const conv = (x: tf.SymbolicTensor, filters: number, strides: number, name: string) =>
    tf.layers.conv2d({
      filters, strides, name,
      kernelSize: 3, padding: 'same', activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: 11 }),
    }).apply(x) as tf.SymbolicTensor
  const b1 = conv(input, 4, 4, 'b1')
  const b2 = conv(b1, 8, 2, 'b2')
  const b3 = conv(b2, 8, 2, 'b3')
  const model = tf.model({ inputs: input, outputs: b3 })

  fs.mkdirSync(dir, { recursive: true })
  await model.save(tf.io.withSaveHandler(async artifacts => {
    const weightData = Array.isArray(artifacts.weightData)
      ? Buffer.concat(artifacts.weightData.map(b => Buffer.from(b)))
      : Buffer.from(artifacts.weightData as ArrayBuffer)
    fs.writeFileSync(path.join(dir, 'weights.bin'), weightData)
    fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify({
      format: 'layers-model',
      generatedBy: 'test',
      modelTopology: artifacts.modelTopology,
      weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
    }))
    return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' as const } }
  }))
  model.dispose()
  return path.join(dir, 'model.json')
}
