/** Backbone registry: string identifier -> frozen feature extractor.
 *
 *  This environment cannot download pretrained weights, so both shipped
 *  backbones are deterministic and locally materialized: a small conv
 *  net with PRNG-seeded frozen weights, and a pure pixel-patch encoder.
 *  The core package only ever sees the output dimension, so any real
 *  pretrained backbone can be added here without touching the consumer.
 */

import * as tf from '@tensorflow/tfjs'
import { GrayImage, resizeBox } from './images'
import { gaussian } from './prng'

export interface Backbone {
  name: string
  dim: number
  inputSize: number
  embedBatch(batch: GrayImage[]): Promise<Float32Array[]>
}

export class BackboneError extends Error {}

/** 16x16 grayscale patch, mean-centered: d = 256. */
function patchBackbone(): Backbone {
  const side = 16
  return {
    name: 'patch16-gray',
    dim: side * side,
    inputSize: side,
    async embedBatch(batch: GrayImage[]): Promise<Float32Array[]> {
      return batch.map((img) => {
        const resized = resizeBox(img, side, side)
        const out = Float32Array.from(resized.pixels)
        let mean = 0
        for (const v of out) mean += v
        mean /= out.length
        for (let i = 0; i < out.length; i++) out[i] = Math.fround(out[i] - mean)
        return out
      })
    },
  }
}

interface ConvLayer {
  kernel: tf.Tensor4D
  bias: tf.Tensor1D
  stride: number
}

function seededKernel(rand: () => number, shape: [number, number, number, number]): tf.Tensor4D {
  const [kh, kw, cin, cout] = shape
  const fanIn = kh * kw * cin
  const scale = Math.sqrt(2.0 / fanIn)
  const values = new Float32Array(kh * kw * cin * cout)
  for (let i = 0; i < values.length; i++) {
    values[i] = rand() * scale
  }
  return tf.tensor4d(values, shape)
}

/** Three strided conv+relu stages and a global average pool: d = 64.
 *  Weights come from a fixed-seed Gaussian stream, so every install
 *  produces the identical frozen extractor. */
function tinyCnnBackbone(): Backbone {
  const inputSize = 32
  const seed = 0x7c3a11
  let layers: ConvLayer[] | null = null

  function build(): ConvLayer[] {
    const rand = gaussian(seed)
    const make = (shape: [number, number, number, number]): ConvLayer => ({
      kernel: seededKernel(rand, shape),
      bias: tf.zeros([shape[3]]),
      stride: 2,
    })
    return [make([3, 3, 1, 8]), make([3, 3, 8, 16]), make([3, 3, 16, 64])]
  }

  return {
    name: 'tiny-cnn-v1',
    dim: 64,
    inputSize,
    async embedBatch(batch: GrayImage[]): Promise<Float32Array[]> {
      if (layers === null) {
        layers = build()
      }
      const net = layers
      const pixels = new Float32Array(batch.length * inputSize * inputSize)
      batch.forEach((img, index) => {
        const resized = resizeBox(img, inputSize, inputSize)
        pixels.set(resized.pixels, index * inputSize * inputSize)
      })
      const pooled = tf.tidy(() => {
        let x: tf.Tensor4D = tf.tensor4d(pixels, [batch.length, inputSize, inputSize, 1])
        for (const layer of net) {
          x = tf.conv2d(x, layer.kernel, layer.stride, 'same').add(layer.bias).relu()
        }
        return tf.mean(x, [1, 2]) as tf.Tensor2D
      })
      const data = (await pooled.data()) as Float32Array
      pooled.dispose()
      const out: Float32Array[] = []
      for (let i = 0; i < batch.length; i++) {
        out.push(data.slice(i * 64, (i + 1) * 64))
      }
      return out
    },
  }
}

const REGISTRY: Record<string, () => Backbone> = {
  'patch16-gray': patchBackbone,
  'tiny-cnn-v1': tinyCnnBackbone,
}

export function backboneNames(): string[] {
  return Object.keys(REGISTRY).sort()
}

export function resolveBackbone(name: string): Backbone {
  const factory = REGISTRY[name]
  if (!factory) {
    throw new BackboneError(`unknown backbone "${name}" (available: ${backboneNames().join(', ')})`)
  }
  return factory()
}
