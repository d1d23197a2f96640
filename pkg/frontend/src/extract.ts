/**
 * Dataset extraction: walk an MVTec-style tree, run every image through the
 * backbone, and emit FTEN feature tensors plus train/test manifests that the
 * anomaly engine consumes directly.
 *
 * Expected input layout, one directory per object class:
 *
 *     class/train/good/*.png
 *     class/test/{good,<defect>}/*.png
 *     class/ground_truth/<defect>/<stem>_mask.png
 *
 * `inputDir` may be a single class directory or a root containing several.
 * Each selected backbone stage is resized bilinearly to the first stage's
 * grid and the channels are concatenated, so the default three residual
 * stages give 64 + 128 + 256 = 448 channels on a 56x56 grid for a 224 crop.
 * No channel reduction happens here — the engine owns feature selection.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'
import { DEFAULT_LAYERS, StageBackbone } from './backbone'
import { decodePng, imageToInput, maskToBinary, RawImage } from './image'
import { writeTensor, ValidationError } from './ften'
import { ManifestItem, saveManifest } from './manifest'

export interface ExtractSpec {
  inputDir: string
  outputDir: string
  resize: number
  crop: number
  layers: string[]
  device?: string
}

export function defaultSpec(inputDir: string, outputDir: string): ExtractSpec {
  return { inputDir, outputDir, resize: 256, crop: 224, layers: [...DEFAULT_LAYERS] }
}

export function validateSpec(spec: ExtractSpec): void {
  if (!Number.isInteger(spec.crop) || spec.crop < 1) {
    throw new ValidationError(`crop must be a positive integer, got ${spec.crop}`)
  }
  if (!Number.isInteger(spec.resize) || spec.resize < spec.crop) {
    throw new ValidationError(`resize (${spec.resize}) must be >= crop (${spec.crop})`)
  }
  if (spec.layers.length === 0) throw new ValidationError('at least one layer is required')
}

const SPLITS = ['train', 'test'] as const

function isClassDir(dir: string): boolean {
  return SPLITS.some(s => fs.existsSync(path.join(dir, s)))
}

function listDirs(dir: string): string[] {
  return fs.readdirSync(dir, { withFileTypes: true })
    .filter(e => e.isDirectory()).map(e => e.name).sort()
}

function listPngs(dir: string): string[] {
  return fs.readdirSync(dir).filter(f => f.toLowerCase().endsWith('.png')).sort()
}

function discoverClasses(inputDir: string): Array<{ name: string; dir: string }> {
  if (!fs.existsSync(inputDir)) throw new ValidationError(`input dir not found: ${inputDir}`)
  if (isClassDir(inputDir)) {
    return [{ name: path.basename(path.resolve(inputDir)), dir: inputDir }]
  }
  const classes = listDirs(inputDir)
    .map(name => ({ name, dir: path.join(inputDir, name) }))
    .filter(c => isClassDir(c.dir))
  if (classes.length === 0) {
    throw new ValidationError(
      `${inputDir}: no class directories with a train/ or test/ split found`)
  }
  return classes
}

function tryDecode(file: string): RawImage | null {
  try {
    return decodePng(file)
  } catch (e) {
    console.warn(`skipping unreadable image ${file}: ${(e as Error).message}`)
    return null
  }
}

/** Stage maps -> one [grid, grid, sum(channels)] tensor on the first stage's grid. */
function fuseStages(backbone: StageBackbone, input: tf.Tensor3D): tf.Tensor3D {
  return tf.tidy(() => {
    const stages = backbone.run(input.expandDims(0))
    for (let i = 0; i < stages.length; i++) {
      if (stages[i].rank !== 4) {
        throw new ValidationError(`layer ${backbone.layers[i]} is not spatial`)
      }
    }
    const [, gh, gw] = stages[0].shape
    const resized = stages.map(s =>
      s.shape[1] === gh && s.shape[2] === gw
        ? s : tf.image.resizeBilinear(s, [gh, gw], false, true))
    return tf.concat(resized, 3).squeeze([0])
  })
}

export async function extract(spec: ExtractSpec, backbone: StageBackbone): Promise<string[]> {
  validateSpec(spec)
  if (spec.device) {
    const ok = await tf.setBackend(spec.device)
    if (!ok) console.warn(`device ${spec.device} unavailable, staying on ${tf.getBackend()}`)
  }
  const manifests: string[] = []
  for (const cls of discoverClasses(spec.inputDir)) {
    const outDir = path.join(spec.outputDir, cls.name)
    for (const split of SPLITS) {
      const splitDir = path.join(cls.dir, split)
      if (!fs.existsSync(splitDir)) continue
      fs.mkdirSync(path.join(outDir, split), { recursive: true })
      const items: ManifestItem[] = []
      for (const sub of listDirs(splitDir)) {
        const label = sub === 'good' ? 'normal' : 'anomalous'
        for (const png of listPngs(path.join(splitDir, sub))) {
          const img = tryDecode(path.join(splitDir, sub, png))
          if (img === null) continue
          const stem = path.basename(png, path.extname(png))
          const input = imageToInput(img, spec.resize, spec.crop)
          const fused = fuseStages(backbone, input)
          const rel = path.join(split, `${sub}_${stem}.ften`)
          writeTensor(path.join(outDir, rel),
                      fused.dataSync() as Float32Array, fused.shape)
          input.dispose()
          fused.dispose()

          let maskRel: string | null = null
          if (label === 'anomalous') {
            const maskPng = path.join(cls.dir, 'ground_truth', sub, `${stem}_mask.png`)
            const maskImg = fs.existsSync(maskPng) ? tryDecode(maskPng) : null
            if (maskImg === null) {
              console.warn(`no ground-truth mask for ${split}/${sub}/${png}`)
            } else {
              maskRel = path.join(split, `${sub}_${stem}_mask.ften`)
              writeTensor(path.join(outDir, maskRel),
                          maskToBinary(maskImg, spec.resize, spec.crop),
                          [spec.crop, spec.crop])
            }
          }
          items.push({
            id: `${sub}_${stem}`,
            features: path.resolve(outDir, rel),
            label,
            mask: maskRel === null ? null : path.resolve(outDir, maskRel),
          })
        }
      }
      const manifestPath = path.join(outDir, `${split}.json`)
      saveManifest(items, manifestPath)
      manifests.push(manifestPath)
    }
  }
  return manifests
}
