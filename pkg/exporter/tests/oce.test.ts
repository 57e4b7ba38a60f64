import { mkdtempSync, readFileSync, rmSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { afterAll, describe, expect, it } from 'vitest'
import { readEmbeddings, writeEmbeddings } from '../src/oce'

const tmp = mkdtempSync(join(tmpdir(), 'oce-'))
afterAll(() => rmSync(tmp, { recursive: true, force: true }))

describe('OCE1 files', () => {
  it('round-trips keys and float32 values', () => {
    const path = join(tmp, 'a.oce')
    const rows = [
      [1.5, -2.25, 0.125],
      [0.1, 0.2, 0.3],
    ]
    writeEmbeddings(path, ['x/0', 'x/full'], rows)
    const back = readEmbeddings(path)
    expect(back.keys).toEqual(['x/0', 'x/full'])
    expect(back.dim).toBe(3)
    expect(back.rows[0]).toEqual([1.5, -2.25, 0.125])
    expect(back.rows[1]).toEqual(rows[1].map(v => Math.fround(v)))
  })

  it('writes the exact byte layout', () => {
    const path = join(tmp, 'b.oce')
    writeEmbeddings(path, ['k'], [[1.5, -2.0]])
    const raw = readFileSync(path)
    expect(raw.subarray(0, 4).toString('ascii')).toBe('OCE1')
    expect(raw.readUInt32LE(4)).toBe(1)
    expect(raw.readUInt32LE(8)).toBe(2)
    expect(raw.readFloatLE(12)).toBe(1.5)
    expect(raw.readFloatLE(16)).toBe(-2.0)
    expect(raw.length).toBe(12 + 8)
  })

  it('rejects inconsistent dimensions', () => {
    expect(() => writeEmbeddings(join(tmp, 'c.oce'), ['a', 'b'], [[1, 2], [1]])).toThrow(
      /dim inconsistency/
    )
  })

  it('rejects key/row count mismatches', () => {
    expect(() => writeEmbeddings(join(tmp, 'd.oce'), ['a'], [[1], [2]])).toThrow(/keys for/)
  })
})
