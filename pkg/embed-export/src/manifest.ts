/** Manifest parsing: a CSV with header `path,label,group`, one image per row. */

import * as fs from 'fs'
import * as path from 'path'
import Papa from 'papaparse'

export interface ManifestRow {
  /** image path, resolved relative to the manifest file */
  path: string
  label: number
  group: number
}

export interface ExportManifest {
  rows: ManifestRow[]
  baseDir: string
  /** max label + 1, at least 2 (the feature-file format requires >= 2 classes) */
  classCount: number
  /** max group + 1, at least 1 */
  groupCount: number
}

export class ManifestError extends Error {}

const HEADER = ['path', 'label', 'group']

function parseId(value: string, kind: string, row: number): number {
  const trimmed = value.trim()
  if (!/^\d+$/.test(trimmed)) {
    throw new ManifestError(`manifest row ${row}: ${kind} must be a non-negative integer, got "${value}"`)
  }
  return parseInt(trimmed, 10)
}

export function parseManifest(csvText: string, baseDir: string): ExportManifest {
  if (csvText.trim().length === 0) {
    throw new ManifestError('manifest is empty')
  }
  const parsed = Papa.parse<string[]>(csvText.trim(), { skipEmptyLines: true })
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]
    throw new ManifestError(`manifest parse error: ${first.message} (row ${first.row})`)
  }
  const records = parsed.data
  if (records.length === 0) {
    throw new ManifestError('manifest is empty')
  }
  const header = records[0].map((h) => h.trim())
  if (header.length !== 3 || !HEADER.every((name, i) => header[i] === name)) {
    throw new ManifestError(`manifest header must be exactly "path,label,group", got "${records[0].join(',')}"`)
  }
  const rows: ManifestRow[] = []
  for (let i = 1; i < records.length; i++) {
    const record = records[i]
    if (record.length !== 3) {
      throw new ManifestError(`manifest row ${i}: expected 3 columns, got ${record.length}`)
    }
    const imagePath = record[0].trim()
    if (imagePath.length === 0) {
      throw new ManifestError(`manifest row ${i}: empty image path`)
    }
    rows.push({
      path: imagePath,
      label: parseId(record[1], 'label', i),
      group: parseId(record[2], 'group', i),
    })
  }
  if (rows.length === 0) {
    throw new ManifestError('manifest has a header but no rows')
  }
  const classCount = Math.max(2, 1 + Math.max(...rows.map((r) => r.label)))
  const groupCount = Math.max(1, 1 + Math.max(...rows.map((r) => r.group)))
  return { rows, baseDir, classCount, groupCount }
}

export function loadManifest(manifestPath: string): ExportManifest {
  let text: string
  try {
    text = fs.readFileSync(manifestPath, 'utf8')
  } catch (err) {
    throw new ManifestError(`cannot read manifest ${manifestPath}: ${(err as Error).message}`)
  }
  return parseManifest(text, path.dirname(path.resolve(manifestPath)))
}

export function resolveImagePath(manifest: ExportManifest, row: ManifestRow): string {
  return path.isAbsolute(row.path) ? row.path : path.join(manifest.baseDir, row.path)
}
