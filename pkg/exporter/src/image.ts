import { Mask, RgbImage } from './png'

export interface CropGeometry {
  bbox: [number, number, number, number] // (r0, c0, r1, c1), half-open
  square: [number, number, number, number] // may extend past the image
}

export function fullMask(height: number, width: number): Mask {
  return { height, width, bits: new Uint8Array(height * width).fill(1) }
}

export function maskArea(mask: Mask): number {
  let area = 0
  for (let i = 0; i < mask.bits.length; i++) area += mask.bits[i]
  return area
}

/** Tight bbox expanded to a square about its center; odd slack goes bottom/right. */
export function cropGeometry(mask: Mask): CropGeometry {
  let r0 = mask.height
  let r1 = -1
  let c0 = mask.width
  let c1 = -1
  for (let r = 0; r < mask.height; r++) {
    for (let c = 0; c < mask.width; c++) {
      if (mask.bits[r * mask.width + c]) {
        if (r < r0) r0 = r
        if (r > r1) r1 = r
        if (c < c0) c0 = c
        if (c > c1) c1 = c
      }
    }
  }
  if (r1 < 0) throw new Error('empty mask not applicable')
  r1 += 1
  c1 += 1
  const side = Math.max(r1 - r0, c1 - c0)
  const sqR0 = r0 - Math.floor((side - (r1 - r0)) / 2)
  const sqC0 = c0 - Math.floor((side - (c1 - c0)) / 2)
  return { bbox: [r0, c0, r1, c1], square: [sqR0, sqC0, sqR0 + side, sqC0 + side] }
}

/** Gray background + square crop (unresized intermediate). */
export function grayBgSquare(img: RgbImage, mask: Mask, gray: number): RgbImage {
  if (img.height !== mask.height || img.width !== mask.width) {
    throw new Error(`mask is ${mask.height}x${mask.width}, image is ${img.height}x${img.width}`)
  }
  const { square } = cropGeometry(mask)
  const [sqR0, sqC0, sqR1] = square
  const side = sqR1 - sqR0
  const plane = side * side
  const out = new Float64Array(3 * plane).fill(gray)
  const srcPlane = img.height * img.width
  for (let r = Math.max(sqR0, 0); r < Math.min(sqR0 + side, img.height); r++) {
    for (let c = Math.max(sqC0, 0); c < Math.min(sqC0 + side, img.width); c++) {
      if (mask.bits[r * img.width + c]) {
        const dst = (r - sqR0) * side + (c - sqC0)
        const src = r * img.width + c
        out[dst] = img.data[src]
        out[plane + dst] = img.data[srcPlane + src]
        out[2 * plane + dst] = img.data[2 * srcPlane + src]
      }
    }
  }
  return { height: side, width: side, data: out }
}

/**
 * Bilinear resize with half-pixel sample centers, written in the same delta
 * form as the pipeline implementation so constant regions stay exact.
 */
export function bilinearResize(img: RgbImage, outH: number, outW: number): RgbImage {
  const { height: h, width: w } = img
  const srcPlane = h * w
  const dstPlane = outH * outW
  const out = new Float64Array(3 * dstPlane)
  const ys = new Float64Array(outH)
  const xs = new Float64Array(outW)
  for (let i = 0; i < outH; i++) ys[i] = Math.min(Math.max((i + 0.5) * (h / outH) - 0.5, 0), h - 1)
  for (let j = 0; j < outW; j++) xs[j] = Math.min(Math.max((j + 0.5) * (w / outW) - 0.5, 0), w - 1)
  for (let ch = 0; ch < 3; ch++) {
    const base = ch * srcPlane
    const dstBase = ch * dstPlane
    for (let i = 0; i < outH; i++) {
      const y0 = Math.floor(ys[i])
      const y1 = Math.min(y0 + 1, h - 1)
      const wy = ys[i] - y0
      for (let j = 0; j < outW; j++) {
        const x0 = Math.floor(xs[j])
        const x1 = Math.min(x0 + 1, w - 1)
        const wx = xs[j] - x0
        const v00 = img.data[base + y0 * w + x0]
        const v01 = img.data[base + y0 * w + x1]
        const v10 = img.data[base + y1 * w + x0]
        const v11 = img.data[base + y1 * w + x1]
        out[dstBase + i * outW + j] =
          v00 + wy * (v10 - v00) + wx * (v01 - v00) + wy * wx * (v11 - v10 - v01 + v00)
      }
    }
  }
  return { height: outH, width: outW, data: out }
}

export function applyGrayBgCrop(
  img: RgbImage,
  mask: Mask,
  targetH: number,
  targetW: number,
  gray: number
): RgbImage {
  const resized = bilinearResize(grayBgSquare(img, mask, gray), targetH, targetW)
  for (let i = 0; i < resized.data.length; i++) {
    resized.data[i] = Math.min(Math.max(resized.data[i], 0), 1)
  }
  return resized
}
