import { readFileSync, writeFileSync, renameSync, mkdirSync } from 'fs'
import { dirname } from 'path'
import { PNG } from 'pngjs'

/** Channel-major float RGB image in [0, 1], matching the pipeline layout. */
export interface RgbImage {
  height: number
  width: number
  data: Float64Array // length 3 * height * width, planes R, G, B
}

/** Binary mask as 0/1 bytes in row-major order. */
export interface Mask {
  height: number
  width: number
  bits: Uint8Array
}

export function atomicWrite(path: string, payload: Buffer | string): void {
  mkdirSync(dirname(path), { recursive: true })
  const tmp = `${path}.tmp-${process.pid}`
  writeFileSync(tmp, payload)
  renameSync(tmp, path)
}

export function readImagePng(path: string): RgbImage {
  const png = PNG.sync.read(readFileSync(path))
  const { width, height } = png
  const plane = height * width
  const data = new Float64Array(3 * plane)
  for (let i = 0; i < plane; i++) {
    data[i] = png.data[i * 4] / 255
    data[plane + i] = png.data[i * 4 + 1] / 255
    data[2 * plane + i] = png.data[i * 4 + 2] / 255
  }
  return { height, width, data }
}

export function writeImagePng(path: string, img: RgbImage): void {
  const png = new PNG({ width: img.width, height: img.height })
  const plane = img.height * img.width
  for (let i = 0; i < plane; i++) {
    png.data[i * 4] = Math.round(img.data[i] * 255)
    png.data[i * 4 + 1] = Math.round(img.data[plane + i] * 255)
    png.data[i * 4 + 2] = Math.round(img.data[2 * plane + i] * 255)
    png.data[i * 4 + 3] = 255
  }
  atomicWrite(path, PNG.sync.write(png, { colorType: 2 }))
}

export function readMaskPng(path: string): Mask {
  const png = PNG.sync.read(readFileSync(path))
  const bits = new Uint8Array(png.height * png.width)
  for (let i = 0; i < bits.length; i++) {
    bits[i] = png.data[i * 4] >= 128 ? 1 : 0
  }
  return { height: png.height, width: png.width, bits }
}

export function writeMaskPng(path: string, mask: Mask): void {
  const png = new PNG({ width: mask.width, height: mask.height })
  for (let i = 0; i < mask.bits.length; i++) {
    const v = mask.bits[i] ? 255 : 0
    png.data[i * 4] = v
    png.data[i * 4 + 1] = v
    png.data[i * 4 + 2] = v
    png.data[i * 4 + 3] = 255
  }
  atomicWrite(path, PNG.sync.write(png, { colorType: 0 }))
}
