/** Deterministic PRNG used to materialize frozen backbone weights. */

/** mulberry32: tiny, fast, identical on every platform. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0
  return function () {
    state = (state + 0x6d2b79f5) >>> 0
    let t = state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Normal(0, 1) stream via Box-Muller over a mulberry32 source. */
export function gaussian(seed: number): () => number {
  const uniform = mulberry32(seed)
  let spare: number | null = null
  return function () {
    if (spare !== null) {
      const value = spare
      spare = null
      return value
    }
    let u = 0
    let v = 0
    while (u === 0) u = uniform()
    v = uniform()
    const radius = Math.sqrt(-2.0 * Math.log(u))
    spare = radius * Math.sin(2.0 * Math.PI * v)
    return radius * Math.cos(2.0 * Math.PI * v)
  }
}
