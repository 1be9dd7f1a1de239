/** Synthetic image fixtures: small deterministic PNGs/JPEGs on disk. */

import * as fs from 'fs'
import * as path from 'path'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'
import { mulberry32 } from '../src/prng'

export function makePngBuffer(width: number, height: number, seed: number): Buffer {
  const png = new PNG({ width, height })
  const rand = mulberry32(seed)
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = Math.floor(rand() * 256)
    png.data[i * 4 + 1] = Math.floor(rand() * 256)
    png.data[i * 4 + 2] = Math.floor(rand() * 256)
    png.data[i * 4 + 3] = 255
  }
  return PNG.sync.write(png)
}

export function makeJpegBuffer(width: number, height: number, seed: number): Buffer {
  const data = Buffer.alloc(width * height * 4)
  const rand = mulberry32(seed)
  for (let i = 0; i < width * height; i++) {
    data[i * 4] = Math.floor(rand() * 256)
    data[i * 4 + 1] = Math.floor(rand() * 256)
    data[i * 4 + 2] = Math.floor(rand() * 256)
    data[i * 4 + 3] = 255
  }
  return jpeg.encode({ data, width, height }, 90).data
}

export interface FixtureSet {
  dir: string
  manifestPath: string
  imagePaths: string[]
}

/** Ten images (mixed sizes, one JPEG, one duplicated pair) plus a
 *  `path,label,group` manifest covering 2 classes x 2 groups. */
export function writeFixtureSet(dir: string): FixtureSet {
  fs.mkdirSync(dir, { recursive: true })
  const rows: string[] = ['path,label,group']
  const imagePaths: string[] = []
  for (let i = 0; i < 10; i++) {
    const name = i === 7 ? `img${i}.jpg` : `img${i}.png`
    const file = path.join(dir, name)
    if (i === 7) {
      fs.writeFileSync(file, makeJpegBuffer(40, 28, 700 + i))
    } else if (i === 9) {
      // exact duplicate of img0: identical files must embed identically
      fs.writeFileSync(file, makePngBuffer(33, 21, 700))
    } else {
      fs.writeFileSync(file, makePngBuffer(33 + i, 21 + i, 700 + i))
    }
    imagePaths.push(file)
    rows.push(`${name},${i % 2},${Math.floor(i / 5)}`)
  }
  const manifestPath = path.join(dir, 'manifest.csv')
  fs.writeFileSync(manifestPath, rows.join('\n') + '\n')
  return { dir, manifestPath, imagePaths }
}
