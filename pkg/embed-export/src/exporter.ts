/** Batched manifest-order embedding export into an HSFM-FS file. */

import { resolveBackbone } from './backbones'
import { GrayImage, ImageError, loadImage } from './images'
import { encodeFeatureFile, writeFeatureFile } from './hsfmfs'
import { ExportManifest, loadManifest, resolveImagePath } from './manifest'

export interface ExportOptions {
  batchSize?: number
  device?: string
  /** expected embedding dimension; mismatch with the backbone is fatal */
  dim?: number
}

export interface ExportSummary {
  out: string
  backbone: string
  count: number
  dim: number
  classCount: number
  groupCount: number
}

export class ExportError extends Error {}

export async function exportManifest(
  manifest: ExportManifest,
  backboneName: string,
  outPath: string,
  options: ExportOptions = {},
): Promise<ExportSummary> {
  const backbone = resolveBackbone(backboneName)
  if (options.dim !== undefined && options.dim !== backbone.dim) {
    throw new ExportError(
      `dimension mismatch: backbone ${backbone.name} produces d=${backbone.dim}, manifest declares d=${options.dim}`,
    )
  }
  if (options.device !== undefined && options.device !== 'cpu') {
    throw new ExportError(`unsupported device "${options.device}" (this build is cpu-only)`)
  }
  const batchSize = options.batchSize ?? 16
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new ExportError(`batch size must be a positive integer, got ${options.batchSize}`)
  }

  const n = manifest.rows.length
  const features = new Float32Array(n * backbone.dim)
  // whole output is buffered and written once, so batch boundaries can
  // never affect row order in the file
  for (let start = 0; start < n; start += batchSize) {
    const rows = manifest.rows.slice(start, start + batchSize)
    const images: GrayImage[] = rows.map((row, offset) => {
      const fullPath = resolveImagePath(manifest, row)
      try {
        return loadImage(fullPath)
      } catch (err) {
        if (err instanceof ImageError) {
          throw new ExportError(`manifest row ${start + offset + 1}: ${err.message}`)
        }
        throw err
      }
    })
    const embedded = await backbone.embedBatch(images)
    embedded.forEach((vector, offset) => {
      if (vector.length !== backbone.dim) {
        throw new ExportError(
          `backbone ${backbone.name} returned ${vector.length} values, expected ${backbone.dim}`,
        )
      }
      features.set(vector, (start + offset) * backbone.dim)
    })
  }

  const labels = Uint32Array.from(manifest.rows.map((r) => r.label))
  const groups = Uint32Array.from(manifest.rows.map((r) => r.group))
  const file = {
    n,
    dim: backbone.dim,
    classCount: manifest.classCount,
    groupCount: manifest.groupCount,
    features,
    labels,
    groups,
  }
  encodeFeatureFile(file) // validate fully before touching the path
  writeFeatureFile(outPath, file)
  return {
    out: outPath,
    backbone: backbone.name,
    count: n,
    dim: backbone.dim,
    classCount: manifest.classCount,
    groupCount: manifest.groupCount,
  }
}

export async function exportEmbeddings(
  manifestPath: string,
  backboneName: string,
  outPath: string,
  options: ExportOptions = {},
): Promise<ExportSummary> {
  return exportManifest(loadManifest(manifestPath), backboneName, outPath, options)
}
