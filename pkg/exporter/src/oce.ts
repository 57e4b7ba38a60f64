import { readFileSync } from 'fs'
import { atomicWrite } from './png'

const MAGIC = Buffer.from('OCE1', 'ascii')

/**
 * Write an "OCE1" embedding file: magic, LE u32 count, LE u32 dim, then
 * count*dim float32 LE values row-major, plus a JSON key sidecar.
 */
export function writeEmbeddings(path: string, keys: string[], rows: number[][]): void {
  if (keys.length !== rows.length) {
    throw new Error(`${keys.length} keys for ${rows.length} rows`)
  }
  const dim = rows.length > 0 ? rows[0].length : 0
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`dim inconsistency: expected ${dim}, got ${row.length}`)
    }
  }
  const header = Buffer.alloc(12)
  MAGIC.copy(header, 0)
  header.writeUInt32LE(rows.length, 4)
  header.writeUInt32LE(dim, 8)
  const body = Buffer.alloc(rows.length * dim * 4)
  rows.forEach((row, i) => {
    row.forEach((v, j) => body.writeFloatLE(Math.fround(v), (i * dim + j) * 4))
  })
  atomicWrite(path, Buffer.concat([header, body]))
  atomicWrite(`${path}.json`, JSON.stringify({ keys }, null, 2) + '\n')
}

export function readEmbeddings(path: string): { keys: string[]; dim: number; rows: number[][] } {
  const raw = readFileSync(path)
  if (raw.length < 12 || !raw.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: not an OCE1 embedding file`)
  }
  const count = raw.readUInt32LE(4)
  const dim = raw.readUInt32LE(8)
  if (raw.length !== 12 + count * dim * 4) {
    throw new Error(`${path}: expected ${12 + count * dim * 4} bytes, got ${raw.length}`)
  }
  const rows: number[][] = []
  for (let i = 0; i < count; i++) {
    const row: number[] = []
    for (let j = 0; j < dim; j++) row.push(raw.readFloatLE(12 + (i * dim + j) * 4))
    rows.push(row)
  }
  const keys = JSON.parse(readFileSync(`${path}.json`, 'utf-8')).keys as string[]
  if (keys.length !== count) throw new Error(`${path}.json: ${keys.length} keys for ${count} rows`)
  return { keys, dim, rows }
}
