/** Writer (and test reader) for the HSFM-FS binary feature-file format.
 *
 *  Little-endian: 32-byte header (magic "HSFM", version 1, n, d, C, G as
 *  u32, 8 reserved zero bytes), then n*d float32 features row-major,
 *  n u32 labels, n u32 groups.
 */

import * as fs from 'fs'

export const MAGIC = 'HSFM'
export const FORMAT_VERSION = 1
export const HEADER_SIZE = 32

export interface FeatureFile {
  n: number
  dim: number
  classCount: number
  groupCount: number
  /** length n*dim, row-major */
  features: Float32Array
  labels: Uint32Array
  groups: Uint32Array
}

export class FormatError extends Error {}

export function encodeFeatureFile(data: FeatureFile): Buffer {
  const { n, dim, classCount, groupCount, features, labels, groups } = data
  if (features.length !== n * dim) {
    throw new FormatError(`features length ${features.length} != n*d = ${n * dim}`)
  }
  if (labels.length !== n || groups.length !== n) {
    throw new FormatError(`labels/groups must have exactly ${n} entries`)
  }
  for (let i = 0; i < n * dim; i++) {
    if (!Number.isFinite(features[i])) {
      throw new FormatError(`non-finite feature value at row ${Math.floor(i / dim)}`)
    }
  }
  for (let i = 0; i < n; i++) {
    if (labels[i] >= classCount) {
      throw new FormatError(`label ${labels[i]} out of range [0, ${classCount}) at row ${i}`)
    }
    if (groups[i] >= groupCount) {
      throw new FormatError(`group ${groups[i]} out of range [0, ${groupCount}) at row ${i}`)
    }
  }
  const buf = Buffer.alloc(HEADER_SIZE + n * dim * 4 + n * 8)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(FORMAT_VERSION, 4)
  buf.writeUInt32LE(n, 8)
  buf.writeUInt32LE(dim, 12)
  buf.writeUInt32LE(classCount, 16)
  buf.writeUInt32LE(groupCount, 20)
  // bytes 24..31 stay zero (reserved)
  let offset = HEADER_SIZE
  for (let i = 0; i < n * dim; i++, offset += 4) {
    buf.writeFloatLE(features[i], offset)
  }
  for (let i = 0; i < n; i++, offset += 4) {
    buf.writeUInt32LE(labels[i], offset)
  }
  for (let i = 0; i < n; i++, offset += 4) {
    buf.writeUInt32LE(groups[i], offset)
  }
  return buf
}

export function writeFeatureFile(path: string, data: FeatureFile): void {
  fs.writeFileSync(path, encodeFeatureFile(data))
}

export function readFeatureFile(path: string): FeatureFile {
  const buf = fs.readFileSync(path)
  if (buf.length < HEADER_SIZE || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError(`${path}: not an HSFM-FS file`)
  }
  const version = buf.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${path}: unsupported HSFM-FS version ${version}`)
  }
  const n = buf.readUInt32LE(8)
  const dim = buf.readUInt32LE(12)
  const classCount = buf.readUInt32LE(16)
  const groupCount = buf.readUInt32LE(20)
  const expected = HEADER_SIZE + n * dim * 4 + n * 8
  if (buf.length !== expected) {
    throw new FormatError(`${path}: payload length mismatch: expected ${expected - HEADER_SIZE} bytes, found ${buf.length - HEADER_SIZE}`)
  }
  const features = new Float32Array(n * dim)
  let offset = HEADER_SIZE
  for (let i = 0; i < n * dim; i++, offset += 4) {
    features[i] = buf.readFloatLE(offset)
  }
  const labels = new Uint32Array(n)
  for (let i = 0; i < n; i++, offset += 4) {
    labels[i] = buf.readUInt32LE(offset)
  }
  const groups = new Uint32Array(n)
  for (let i = 0; i < n; i++, offset += 4) {
    groups[i] = buf.readUInt32LE(offset)
  }
  return { n, dim, classCount, groupCount, features, labels, groups }
}
