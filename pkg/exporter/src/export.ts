import { existsSync, readFileSync } from 'fs'
import { dirname, isAbsolute, join, resolve } from 'path'
import { applyGrayBgCrop, fullMask } from './image'
import { getEncoder, getMaskModel } from './models'
import { writeEmbeddings } from './oce'
import { Mask, atomicWrite, readImagePng, readMaskPng, writeMaskPng } from './png'

export type ApplyMode = 'gray-crop' | 'alpha'

export interface ExportJob {
  model: string
  dataset: string // manifest path
  outRoot: string
  batchSize: number // inference batching knob; the toy models ignore it
  mode: ApplyMode
  targetH: number
  targetW: number
  gray: number
}

interface ManifestSample {
  id: string
  image: string
  label: number
  group?: number
  gt_seg?: string
  gt_bbox?: number[]
  masks_dir?: string
  class_names_ref?: string
  [key: string]: unknown
}

interface Manifest {
  version: number
  samples: ManifestSample[]
}

function dataRoot(manifestPath: string): string {
  const env = process.env.OCCAM_DATA_ROOT
  return env && env.length > 0 ? env : dirname(resolve(manifestPath))
}

function resolveEntry(entry: string, root: string): string {
  return isAbsolute(entry) ? entry : join(root, entry)
}

function readManifest(path: string): { manifest: Manifest; root: string } {
  const manifest = JSON.parse(readFileSync(path, 'utf-8')) as Manifest
  if (manifest.version !== 1) {
    throw new Error(`${path}: unsupported manifest version ${manifest.version}`)
  }
  return { manifest, root: dataRoot(path) }
}

function sortedSamples(manifest: Manifest): ManifestSample[] {
  return [...manifest.samples].sort((a, b) => a.id.localeCompare(b.id))
}

/**
 * Run the mask model over every sample and write one PNG per candidate mask
 * (pre-filtering), plus a manifest pointing at the source images.
 */
export function exportMasks(job: ExportJob): { manifest: string; maskCounts: Record<string, number> } {
  const model = getMaskModel(job.model)
  const { manifest, root } = readManifest(job.dataset)
  const out = resolve(job.outRoot)
  const maskCounts: Record<string, number> = {}
  const entries: ManifestSample[] = []
  for (const sample of sortedSamples(manifest)) {
    const imagePath = resolveEntry(sample.image, root)
    const masks = model.generate(readImagePng(imagePath))
    const masksDir = join(out, 'masks', sample.id)
    masks.forEach((mask, k) => writeMaskPng(join(masksDir, `${k}.png`), mask))
    if (masks.length === 0) {
      // Valid manifests may reference an empty masks directory.
      atomicWrite(join(masksDir, '.keep'), '')
    }
    maskCounts[sample.id] = masks.length
    const entry: ManifestSample = {
      id: sample.id,
      image: imagePath,
      label: sample.label,
      masks_dir: `masks/${sample.id}`,
    }
    if (sample.group !== undefined) entry.group = sample.group
    if (sample.gt_seg !== undefined) entry.gt_seg = resolveEntry(sample.gt_seg, root)
    if (sample.gt_bbox !== undefined) entry.gt_bbox = sample.gt_bbox
    if (sample.class_names_ref !== undefined) {
      entry.class_names_ref = resolveEntry(sample.class_names_ref, root)
    }
    entries.push(entry)
  }
  const manifestPath = join(out, 'manifest.json')
  atomicWrite(manifestPath, JSON.stringify({ version: 1, samples: entries }, null, 2) + '\n')
  return { manifest: manifestPath, maskCounts }
}

function loadMasks(masksDir: string): Mask[] {
  const masks: Mask[] = []
  for (let k = 0; ; k++) {
    const path = join(masksDir, `${k}.png`)
    if (!existsSync(path)) break
    masks.push(readMaskPng(path))
  }
  return masks
}

export interface EmbeddingExport {
  embeddings: string
  classEmbeddings: string
  keys: string[]
  vectors: number[][]
  classNames: string[]
}

/**
 * Encode every (sample, candidate mask) application plus the full-image
 * fallback, and the "A photo of X" class prompts, into OCE1 files.
 */
export function exportEmbeddings(job: ExportJob): EmbeddingExport {
  const encoder = getEncoder(job.model)
  if (job.mode === 'alpha' && !encoder.acceptsAlpha) {
    throw new Error(`encoder ${encoder.name} does not accept alpha input`)
  }
  const { manifest, root } = readManifest(job.dataset)
  const out = resolve(job.outRoot)
  const keys: string[] = []
  const vectors: number[][] = []

  const encodeApplication = (img: ReturnType<typeof readImagePng>, mask: Mask): number[] => {
    if (job.mode === 'gray-crop') {
      const applied = applyGrayBgCrop(img, mask, job.targetH, job.targetW, job.gray)
      return encoder.encodeRegion(applied, null)
    }
    return encoder.encodeRegion(img, mask.bits)
  }

  let classRef: string | null = null
  for (const sample of sortedSamples(manifest)) {
    const img = readImagePng(resolveEntry(sample.image, root))
    if (!sample.masks_dir) throw new Error(`sample ${sample.id}: masks must be exported first`)
    const masks = loadMasks(resolveEntry(sample.masks_dir, root))
    masks.forEach((mask, k) => {
      keys.push(`${sample.id}/${k}`)
      vectors.push(encodeApplication(img, mask))
    })
    keys.push(`${sample.id}/full`)
    vectors.push(encodeApplication(img, fullMask(img.height, img.width)))
    if (sample.class_names_ref) classRef = resolveEntry(sample.class_names_ref, root)
  }

  for (const vec of vectors) {
    if (vec.length !== encoder.dim) {
      throw new Error(`dim inconsistency: expected ${encoder.dim}, got ${vec.length}`)
    }
  }
  const embeddingsPath = join(out, `${encoder.name}.oce`)
  writeEmbeddings(embeddingsPath, keys, vectors)

  let classNames: string[] = []
  const classPath = join(out, `${encoder.name}.classes.oce`)
  if (classRef) {
    classNames = JSON.parse(readFileSync(classRef, 'utf-8')).class_names as string[]
    writeEmbeddings(
      classPath,
      classNames,
      classNames.map(name => encoder.encodeText(`A photo of ${name}`))
    )
  }
  return { embeddings: embeddingsPath, classEmbeddings: classPath, keys, vectors, classNames }
}
