/** Image decoding (PNG/JPEG by magic bytes) and grayscale box resizing. */

import * as fs from 'fs'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

export interface GrayImage {
  width: number
  height: number
  /** row-major luma values in [0, 1] */
  pixels: Float32Array
}

export class ImageError extends Error {}

function rgbaToGray(data: Uint8Array, width: number, height: number): GrayImage {
  const pixels = new Float32Array(width * height)
  for (let i = 0; i < width * height; i++) {
    const r = data[i * 4]
    const g = data[i * 4 + 1]
    const b = data[i * 4 + 2]
    pixels[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255
  }
  return { width, height, pixels }
}

export function decodeImage(buf: Buffer, name: string): GrayImage {
  if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50 && buf[2] === 0x4e && buf[3] === 0x47) {
    try {
      const png = PNG.sync.read(buf)
      return rgbaToGray(png.data, png.width, png.height)
    } catch (err) {
      throw new ImageError(`cannot decode PNG ${name}: ${(err as Error).message}`)
    }
  }
  if (buf.length >= 2 && buf[0] === 0xff && buf[1] === 0xd8) {
    try {
      const img = jpeg.decode(buf, { useTArray: true, formatAsRGBA: true })
      return rgbaToGray(img.data, img.width, img.height)
    } catch (err) {
      throw new ImageError(`cannot decode JPEG ${name}: ${(err as Error).message}`)
    }
  }
  throw new ImageError(`${name}: not a PNG or JPEG file`)
}

export function loadImage(path: string): GrayImage {
  let buf: Buffer
  try {
    buf = fs.readFileSync(path)
  } catch (err) {
    throw new ImageError(`cannot read image ${path}: ${(err as Error).message}`)
  }
  return decodeImage(buf, path)
}

/** Box-average resize: every target pixel averages its source rectangle.
 *  Deterministic and free of resampling-library variation. */
export function resizeBox(img: GrayImage, width: number, height: number): GrayImage {
  if (img.width === width && img.height === height) {
    return img
  }
  const out = new Float32Array(width * height)
  for (let ty = 0; ty < height; ty++) {
    const y0 = Math.floor((ty * img.height) / height)
    const y1 = Math.max(y0 + 1, Math.floor(((ty + 1) * img.height) / height))
    for (let tx = 0; tx < width; tx++) {
      const x0 = Math.floor((tx * img.width) / width)
      const x1 = Math.max(x0 + 1, Math.floor(((tx + 1) * img.width) / width))
      let sum = 0
      for (let sy = y0; sy < y1; sy++) {
        for (let sx = x0; sx < x1; sx++) {
          sum += img.pixels[sy * img.width + sx]
        }
      }
      out[ty * width + tx] = sum / ((y1 - y0) * (x1 - x0))
    }
  }
  return { width, height, pixels: out }
}
