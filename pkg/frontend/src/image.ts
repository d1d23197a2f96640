/**
 * Image loading and the preprocessing pipeline in front of the backbone:
 * decode PNG, bilinear-resize to `resize`, center-crop to `crop`, scale to
 * [0, 1] and normalize with the ImageNet statistics the pretrained weights
 * were trained under. Ground-truth masks go through the same geometry with
 * nearest-neighbor resampling so they stay binary.
 */

import * as fs from 'fs'
import * as tf from '@tensorflow/tfjs'
import { PNG } from 'pngjs'

export const IMAGENET_MEAN = [0.485, 0.456, 0.406]
export const IMAGENET_STD = [0.229, 0.224, 0.225]

export interface RawImage {
  width: number
  height: number
  data: Uint8Array // RGBA, row-major
}

export function decodePng(file: string): RawImage {
  const png = PNG.sync.read(fs.readFileSync(file))
  return { width: png.width, height: png.height, data: new Uint8Array(png.data) }
}

export function centerCrop<T extends tf.Tensor3D | tf.Tensor4D>(t: T, size: number): T {
  const [h, w] = t.rank === 3 ? t.shape : (t.shape as number[]).slice(1, 3)
  if (h < size || w < size) throw new Error(`cannot crop ${size} from ${h}x${w}`)
  const top = Math.floor((h - size) / 2)
  const left = Math.floor((w - size) / 2)
  if (t.rank === 3) return tf.slice(t, [top, left, 0], [size, size, -1]) as T
  return tf.slice(t, [0, top, left, 0], [-1, size, size, -1]) as T
}

/** RGBA bytes -> normalized [crop, crop, 3] float tensor ready for the backbone. */
export function imageToInput(img: RawImage, resize: number, crop: number): tf.Tensor3D {
  return tf.tidy(() => {
    const rgba = tf.tensor3d(img.data, [img.height, img.width, 4], 'int32')
    const rgb = tf.slice(rgba, [0, 0, 0], [-1, -1, 3]).toFloat().div(255)
    const resized = tf.image.resizeBilinear(rgb as tf.Tensor3D, [resize, resize], false, true)
    const cropped = centerCrop(resized, crop)
    return cropped.sub(IMAGENET_MEAN).div(IMAGENET_STD) as tf.Tensor3D
  })
}

/** Ground-truth mask -> binary [crop, crop] uint8 array on the input grid. */
export function maskToBinary(img: RawImage, resize: number, crop: number): Uint8Array {
  return tf.tidy(() => {
    // binarize before resampling so nearest-neighbor keeps values in {0, 1}
    const bin = new Uint8Array(img.width * img.height)
    for (let i = 0; i < bin.length; i++) bin[i] = img.data[4 * i] > 0 ? 1 : 0
    const t = tf.tensor3d(bin, [img.height, img.width, 1], 'float32')
    const resized = tf.image.resizeNearestNeighbor(t, [resize, resize], false, true)
    const cropped = centerCrop(resized, crop)
    return Uint8Array.from(cropped.dataSync())
  })
}
