/**
 * FTEN tensor files: the interchange format the anomaly engine consumes.
 *
 * Layout, all little-endian:
 *
 *     magic    4 bytes  "FTEN"
 *     version  u32      currently 1
 *     rank     u32      2 or 3
 *     dims     rank*u64 each >= 1
 *     dtype    u8       1 = float32, 2 = uint8
 *     payload  row-major element data
 *
 * float32 payloads must be finite; uint8 payloads are binary masks, rank 2,
 * values 0 or 1 only. Writes round-trip bit-exactly through reads.
 */

import * as fs from 'fs'
import * as os from 'os'

export const MAGIC = 'FTEN'
export const VERSION = 1
export const DTYPE_F32 = 1
export const DTYPE_U8 = 2

export class FormatError extends Error {}
export class ValidationError extends Error {}

export interface Tensor {
  data: Float32Array | Uint8Array
  dims: number[]
}

function checkDims(dims: number[], count: number): void {
  if (dims.length !== 2 && dims.length !== 3) {
    throw new ValidationError(`tensor rank must be 2 or 3, got ${dims.length}`)
  }
  let n = 1
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1) {
      throw new ValidationError(`all dims must be >= 1, got [${dims}]`)
    }
    n *= d
  }
  if (n !== count) {
    throw new ValidationError(`dims [${dims}] imply ${n} elements, data has ${count}`)
  }
}

export function encodeTensor(data: Float32Array | Uint8Array, dims: number[]): Buffer {
  checkDims(dims, data.length)
  let dtype: number
  if (data instanceof Uint8Array) {
    dtype = DTYPE_U8
    if (dims.length !== 2) throw new ValidationError('uint8 tensors (masks) must be rank 2')
    for (let i = 0; i < data.length; i++) {
      if (data[i] > 1) throw new ValidationError('mask values must be 0 or 1')
    }
  } else {
    dtype = DTYPE_F32
    for (let i = 0; i < data.length; i++) {
      if (!Number.isFinite(data[i])) {
        throw new ValidationError('float tensors must be finite (no NaN/Inf)')
      }
    }
  }

  const header = Buffer.alloc(4 + 4 + 4 + 8 * dims.length + 1)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(dims.length, 8)
  dims.forEach((d, i) => header.writeBigUInt64LE(BigInt(d), 12 + 8 * i))
  header.writeUInt8(dtype, 12 + 8 * dims.length)

  let payload: Buffer
  if (data instanceof Uint8Array) {
    payload = Buffer.from(data)
  } else if (os.endianness() === 'LE') {
    payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength)
  } else {
    payload = Buffer.alloc(data.byteLength)
    for (let i = 0; i < data.length; i++) payload.writeFloatLE(data[i], 4 * i)
  }
  return Buffer.concat([header, payload])
}

export function writeTensor(path: string, data: Float32Array | Uint8Array, dims: number[]): void {
  fs.writeFileSync(path, encodeTensor(data, dims))
}

export function decodeTensor(blob: Buffer, name = 'tensor'): Tensor {
  if (blob.length < 12) throw new FormatError(`${name}: truncated header`)
  if (blob.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError(`${name}: bad magic ${JSON.stringify(blob.toString('latin1', 0, 4))}`)
  }
  const version = blob.readUInt32LE(4)
  if (version !== VERSION) throw new FormatError(`${name}: unsupported version ${version}`)
  const rank = blob.readUInt32LE(8)
  if (rank !== 2 && rank !== 3) throw new FormatError(`${name}: rank must be 2 or 3, got ${rank}`)
  const need = 12 + 8 * rank + 1
  if (blob.length < need) throw new FormatError(`${name}: truncated header`)
  const dims: number[] = []
  let n = 1
  for (let i = 0; i < rank; i++) {
    const d = blob.readBigUInt64LE(12 + 8 * i)
    if (d < 1n) throw new FormatError(`${name}: zero-sized dim`)
    if (d > BigInt(Number.MAX_SAFE_INTEGER)) throw new FormatError(`${name}: dim ${d} too large`)
    dims.push(Number(d))
    n *= Number(d)
  }
  const dtype = blob.readUInt8(12 + 8 * rank)
  if (dtype !== DTYPE_F32 && dtype !== DTYPE_U8) {
    throw new FormatError(`${name}: unknown dtype code ${dtype}`)
  }
  const itemsize = dtype === DTYPE_F32 ? 4 : 1
  if (blob.length !== need + n * itemsize) {
    throw new FormatError(
      `${name}: payload is ${blob.length - need} bytes, expected ${n * itemsize}`)
  }

  if (dtype === DTYPE_U8) {
    if (rank !== 2) throw new FormatError(`${name}: uint8 tensors must be rank 2`)
    const data = new Uint8Array(blob.subarray(need))
    for (let i = 0; i < data.length; i++) {
      if (data[i] > 1) throw new FormatError(`${name}: mask values must be 0 or 1`)
    }
    return { data, dims }
  }
  let data: Float32Array
  if (os.endianness() === 'LE') {
    // copy into a fresh buffer so the view is 4-byte aligned
    const raw = new Uint8Array(blob.subarray(need))
    data = new Float32Array(raw.buffer, 0, n)
  } else {
    data = new Float32Array(n)
    for (let i = 0; i < n; i++) data[i] = blob.readFloatLE(need + 4 * i)
  }
  for (let i = 0; i < n; i++) {
    if (!Number.isFinite(data[i])) throw new FormatError(`${name}: non-finite float payload`)
  }
  return { data, dims }
}

export function readTensor(path: string): Tensor {
  return decodeTensor(fs.readFileSync(path), path)
}
