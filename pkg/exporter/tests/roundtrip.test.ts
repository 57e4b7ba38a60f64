import { execFileSync } from 'child_process'
import { mkdtempSync, readFileSync, readdirSync, rmSync, statSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'
import { ExportJob, exportEmbeddings, exportMasks } from '../src/export'
import { maskArea } from '../src/image'
import { colorRegionMasks } from '../src/models'
import { readImagePng } from '../src/png'

const tmp = mkdtempSync(join(tmpdir(), 'occam-export-'))
afterAll(() => rmSync(tmp, { recursive: true, force: true }))

function python(args: string[]): string {
  return execFileSync('python3', ['-m', 'occam.cli', ...args], { encoding: 'utf-8' })
}

function inspect(manifest: string, embeddings: string[] = []): any {
  const args = ['inspect', '--manifest', manifest]
  for (const e of embeddings) args.push('--embeddings', e, '--include-values')
  return JSON.parse(python(args))
}

function job(overrides: Partial<ExportJob>): ExportJob {
  return {
    model: 'toy-color-regions',
    dataset: '',
    outRoot: '',
    batchSize: 8,
    mode: 'gray-crop',
    targetH: 48,
    targetW: 48,
    gray: 0.5,
    ...overrides,
  }
}

function cosine(a: number[], b: number[]): number {
  let dot = 0
  let na = 0
  let nb = 0
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i]
    na += a[i] * a[i]
    nb += b[i] * b[i]
  }
  return dot / Math.sqrt(na * nb)
}

function snapshotTree(root: string): Record<string, string> {
  const out: Record<string, string> = {}
  const walk = (dir: string) => {
    for (const name of readdirSync(dir)) {
      const path = join(dir, name)
      if (statSync(path).isDirectory()) walk(path)
      else out[path.slice(root.length)] = readFileSync(path).toString('base64')
    }
  }
  walk(root)
  return out
}

let sourceManifest = ''

beforeAll(() => {
  const dataDir = join(tmp, 'data')
  python(['synth', '--out', dataDir, '--n', '5', '--seed', '3', '--size', '48'])
  sourceManifest = join(dataDir, 'manifest.json')
})

describe('mask export round-trip', () => {
  it('reloads through the dataset backend with exact dims, counts, and order', () => {
    const out = join(tmp, 'masks-out')
    const result = exportMasks(job({ dataset: sourceManifest, outRoot: out }))
    const report = inspect(result.manifest)
    expect(report.n_errors).toBe(0)
    expect(report.n_samples).toBe(5)
    for (const sample of report.samples) {
      expect(sample.n_masks).toBe(result.maskCounts[sample.id])
      expect(sample.height).toBe(48)
      expect(sample.width).toBe(48)
      // Per-mask pixel counts survive the PNG round trip in order.
      const image = readImagePng(join(tmp, 'data', 'images', `${sample.id}.png`))
      const expectedAreas = colorRegionMasks(image).map(maskArea)
      expect(sample.mask_areas).toEqual(expectedAreas)
    }
  })

  it('re-exporting the same inputs produces identical files', () => {
    const outA = join(tmp, 'det-a')
    const outB = join(tmp, 'det-b')
    exportMasks(job({ dataset: sourceManifest, outRoot: outA }))
    exportEmbeddings(job({ dataset: join(outA, 'manifest.json'), outRoot: outA, model: 'toy' }))
    exportMasks(job({ dataset: sourceManifest, outRoot: outB }))
    exportEmbeddings(job({ dataset: join(outB, 'manifest.json'), outRoot: outB, model: 'toy' }))
    const treeA = snapshotTree(outA)
    const treeB = snapshotTree(outB)
    expect(Object.keys(treeA).sort()).toEqual(Object.keys(treeB).sort())
    for (const key of Object.keys(treeA)) {
      if (key.endsWith('manifest.json')) continue // carries its own absolute outRoot-independent paths
      expect(treeB[key], key).toBe(treeA[key])
    }
  })

  it('a generator returning zero masks still yields a valid manifest', () => {
    const out = join(tmp, 'none-out')
    const result = exportMasks(job({ dataset: sourceManifest, outRoot: out, model: 'toy-none' }))
    const report = inspect(result.manifest)
    expect(report.n_errors).toBe(0)
    expect(report.samples.every((s: any) => s.n_masks === 0)).toBe(true)
  })
})

describe('embedding export round-trip', () => {
  it('reloaded embeddings match in-process values within 1e-6 cosine distance', () => {
    const out = join(tmp, 'emb-out')
    const masksOut = exportMasks(job({ dataset: sourceManifest, outRoot: out }))
    const embOut = exportEmbeddings(
      job({ dataset: masksOut.manifest, outRoot: out, model: 'toy' })
    )
    const report = inspect(masksOut.manifest, [embOut.embeddings, embOut.classEmbeddings])

    const reloaded = report.embeddings[0]
    expect(reloaded.dim).toBe(12)
    expect(reloaded.keys).toEqual(embOut.keys)
    const expectedCount = report.samples.reduce((acc: number, s: any) => acc + s.n_masks + 1, 0)
    expect(reloaded.count).toBe(expectedCount)
    reloaded.values.forEach((row: number[], i: number) => {
      expect(cosine(row, embOut.vectors[i])).toBeGreaterThan(1 - 1e-6)
    })

    const classes = report.embeddings[1]
    expect(classes.keys).toEqual(['class0', 'class1', 'class2'])
    expect(classes.dim).toBe(12)
    classes.values.forEach((row: number[]) => {
      const norm = Math.sqrt(row.reduce((acc, v) => acc + v * v, 0))
      expect(Math.abs(norm - 1)).toBeLessThan(1e-6)
    })
  })

  it('full-image rows use the documented key convention', () => {
    const out = join(tmp, 'keys-out')
    const masksOut = exportMasks(job({ dataset: sourceManifest, outRoot: out }))
    const embOut = exportEmbeddings(job({ dataset: masksOut.manifest, outRoot: out, model: 'toy' }))
    const fullKeys = embOut.keys.filter(k => k.endsWith('/full'))
    expect(fullKeys.length).toBe(5)
    expect(embOut.keys[embOut.keys.length - 1]).toMatch(/\/full$/)
  })

  it('alpha mode is rejected for encoders without alpha support', () => {
    const out = join(tmp, 'alpha-out')
    const masksOut = exportMasks(job({ dataset: sourceManifest, outRoot: out }))
    expect(() =>
      exportEmbeddings(
        job({ dataset: masksOut.manifest, outRoot: out, model: 'toy-rgb', mode: 'alpha' })
      )
    ).toThrow(/does not accept alpha/)
  })

  it('alpha-mode embeddings restrict features to the mask region', () => {
    const out = join(tmp, 'alpha-ok')
    const masksOut = exportMasks(job({ dataset: sourceManifest, outRoot: out }))
    const embOut = exportEmbeddings(
      job({ dataset: masksOut.manifest, outRoot: out, model: 'toy', mode: 'alpha' })
    )
    // Area fractions (last feature) of candidate masks must sum to ~1 per
    // sample: the color regions partition the image.
    const bydSample: Record<string, number> = {}
    embOut.keys.forEach((key, i) => {
      const [id, suffix] = key.split('/')
      if (suffix !== 'full') bydSample[id] = (bydSample[id] ?? 0) + embOut.vectors[i][11]
    })
    for (const total of Object.values(bydSample)) {
      expect(Math.abs(total - 1)).toBeLessThan(1e-9)
    }
  })

  it('unknown model ids fail with a clear error', () => {
    expect(() => exportMasks(job({ dataset: sourceManifest, outRoot: tmp, model: 'sam-vit-h' }))).toThrow(
      /not available locally/
    )
  })
})
