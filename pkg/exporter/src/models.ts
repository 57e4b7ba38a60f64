import { Mask, RgbImage } from './png'

export interface MaskModel {
  name: string
  generate(img: RgbImage): Mask[]
}

export interface EncoderModel {
  name: string
  dim: number
  acceptsAlpha: boolean
  /** Encode the pixels of `img` visible under `region` (null = whole image). */
  encodeRegion(img: RgbImage, region: Uint8Array | null): number[]
  /** Deterministic embedding for a class-name prompt. */
  encodeText(prompt: string): number[]
}

/**
 * Connected components (8-connectivity) of exactly-equal colors, in scan
 * order.  On flat synthetic imagery this recovers each solid object and the
 * background as separate proposals, standing in for a real segmenter.
 */
export function colorRegionMasks(img: RgbImage): Mask[] {
  const { height, width } = img
  const plane = height * width
  const seen = new Uint8Array(plane)
  const masks: Mask[] = []
  const sameColor = (a: number, b: number) =>
    img.data[a] === img.data[b] &&
    img.data[plane + a] === img.data[plane + b] &&
    img.data[2 * plane + a] === img.data[2 * plane + b]

  for (let start = 0; start < plane; start++) {
    if (seen[start]) continue
    const bits = new Uint8Array(plane)
    const stack = [start]
    seen[start] = 1
    bits[start] = 1
    while (stack.length) {
      const p = stack.pop() as number
      const r = Math.floor(p / width)
      const c = p % width
      for (let dr = -1; dr <= 1; dr++) {
        for (let dc = -1; dc <= 1; dc++) {
          if (dr === 0 && dc === 0) continue
          const nr = r + dr
          const nc = c + dc
          if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue
          const q = nr * width + nc
          if (!seen[q] && sameColor(p, q)) {
            seen[q] = 1
            bits[q] = 1
            stack.push(q)
          }
        }
      }
    }
    masks.push({ height, width, bits })
  }
  return masks
}

function hueOf(r: number, g: number, b: number): number {
  const maxc = Math.max(r, g, b)
  const minc = Math.min(r, g, b)
  const delta = maxc - minc
  if (delta <= 0) return 0
  let hue: number
  if (maxc === r) {
    hue = ((g - b) / delta) % 6
    if (hue < 0) hue += 6
  } else if (maxc === g) {
    hue = (b - r) / delta + 2
  } else {
    hue = (r - g) / delta + 4
  }
  return (hue / 6) % 1
}

export const TOY_DIM = 12

/** Mean RGB + 8-bin hue histogram + area fraction over the visible region. */
function toyEncodeRegion(img: RgbImage, region: Uint8Array | null): number[] {
  const plane = img.height * img.width
  const out = new Array<number>(TOY_DIM).fill(0)
  let count = 0
  const sums = [0, 0, 0]
  const hist = new Array<number>(8).fill(0)
  for (let i = 0; i < plane; i++) {
    if (region !== null && !region[i]) continue
    count++
    const r = img.data[i]
    const g = img.data[plane + i]
    const b = img.data[2 * plane + i]
    sums[0] += r
    sums[1] += g
    sums[2] += b
    hist[Math.min(Math.floor(hueOf(r, g, b) * 8), 7)]++
  }
  if (count > 0) {
    for (let ch = 0; ch < 3; ch++) out[ch] = sums[ch] / count
    for (let k = 0; k < 8; k++) out[3 + k] = hist[k] / count
    out[11] = count / plane
  }
  return out
}

function fnv1a(text: string): number {
  let hash = 0x811c9dc5
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i)
    hash = Math.imul(hash, 0x01000193) >>> 0
  }
  return hash >>> 0
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state + 0x6d2b79f5) >>> 0
    let t = state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Placeholder text encoder: a deterministic unit vector per prompt. */
function toyEncodeText(prompt: string): number[] {
  const rand = mulberry32(fnv1a(prompt))
  const vec = Array.from({ length: TOY_DIM }, () => rand() + 0.05)
  const norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0))
  return vec.map(v => v / norm)
}

const MASK_MODELS: Record<string, MaskModel> = {
  'toy-color-regions': { name: 'toy-color-regions', generate: colorRegionMasks },
  // Degenerate generator used to exercise the empty-masks path.
  'toy-none': { name: 'toy-none', generate: () => [] },
}

const ENCODERS: Record<string, EncoderModel> = {
  toy: {
    name: 'toy',
    dim: TOY_DIM,
    acceptsAlpha: true,
    encodeRegion: toyEncodeRegion,
    encodeText: toyEncodeText,
  },
  // Same features but declared alpha-incapable, for the capability check.
  'toy-rgb': {
    name: 'toy-rgb',
    dim: TOY_DIM,
    acceptsAlpha: false,
    encodeRegion: toyEncodeRegion,
    encodeText: toyEncodeText,
  },
}

export function getMaskModel(id: string): MaskModel {
  const model = MASK_MODELS[id]
  if (!model) {
    throw new Error(
      `mask model ${id} is not available locally (known: ${Object.keys(MASK_MODELS).join(', ')})`
    )
  }
  return model
}

export function getEncoder(id: string): EncoderModel {
  const encoder = ENCODERS[id]
  if (!encoder) {
    throw new Error(
      `encoder ${id} is not available locally (known: ${Object.keys(ENCODERS).join(', ')})`
    )
  }
  return encoder
}
