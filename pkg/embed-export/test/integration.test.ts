/** End-to-end acceptance: a 10-image manifest exports to a file the core
 *  package validates and evaluates through its own CLI, and re-export is
 *  bit-identical. Requires the core `hsfm` CLI on PATH. */

import { spawnSync } from 'child_process'
import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { exportEmbeddings } from '../src/exporter'
import { writeFixtureSet, FixtureSet } from './fixtures'

function hsfmAvailable(): boolean {
  return spawnSync('hsfm', ['--help'], { encoding: 'utf8' }).status === 0
}

let work: string
let fixtures: FixtureSet

beforeAll(() => {
  work = fs.mkdtempSync(path.join(os.tmpdir(), 'embed-export-int-'))
  fixtures = writeFixtureSet(path.join(work, 'images'))
})

afterAll(() => {
  fs.rmSync(work, { recursive: true, force: true })
})

describe.runIf(hsfmAvailable())('core-package integration', () => {
  it('exported file trains and evaluates end to end, re-export bit-identical', async () => {
    const exported = path.join(work, 'features.hsfm')
    const summary = await exportEmbeddings(fixtures.manifestPath, 'tiny-cnn-v1', exported)
    expect(summary.count).toBe(10)

    const again = path.join(work, 'features-again.hsfm')
    await exportEmbeddings(fixtures.manifestPath, 'tiny-cnn-v1', again, { batchSize: 2 })
    expect(fs.readFileSync(exported).equals(fs.readFileSync(again))).toBe(true)

    // train the core's baseline head on the exported features (the same
    // file serves as every split here; this is a plumbing check, not a
    // benchmark) and evaluate the checkpoint on it
    const trainConfig = path.join(work, 'train.json')
    fs.writeFileSync(
      trainConfig,
      JSON.stringify({
        seed: 0,
        data: { files: { train: exported, val: exported, test: exported } },
        erm: { steps: 50, lr: 0.5 },
      }),
    )
    const outDir = path.join(work, 'erm')
    const train = spawnSync('hsfm', ['train-erm', '--config', trainConfig, '--out', outDir], {
      encoding: 'utf8',
    })
    expect(train.stderr).toBe('')
    expect(train.status).toBe(0)

    const evalConfig = path.join(work, 'eval.json')
    fs.writeFileSync(
      evalConfig,
      JSON.stringify({
        evaluate: { head: path.join(outDir, 'head_erm.hsfh'), data: exported },
      }),
    )
    const evaluated = spawnSync('hsfm', ['evaluate', '--config', evalConfig], { encoding: 'utf8' })
    expect(evaluated.status).toBe(0)
    const report = JSON.parse(evaluated.stdout)
    const counts = report.per_group_counts as number[]
    expect(counts.reduce((a, b) => a + b, 0)).toBe(10)
    expect(report.worst_group_accuracy).toBeGreaterThanOrEqual(0)
    expect(report.worst_group_accuracy).toBeLessThanOrEqual(1)
  })

  it('malformed export is impossible: core read validation accepts every backbone', async () => {
    for (const backbone of ['patch16-gray', 'tiny-cnn-v1']) {
      const out = path.join(work, `check-${backbone}.hsfm`)
      await exportEmbeddings(fixtures.manifestPath, backbone, out)
      const evalConfig = path.join(work, `check-${backbone}.json`)
      // use the core reader via evaluate with a deliberately missing head:
      // the config validator must fail on the head, not the data file
      fs.writeFileSync(
        evalConfig,
        JSON.stringify({ evaluate: { head: out, data: out } }),
      )
      const result = spawnSync('hsfm', ['evaluate', '--config', evalConfig], { encoding: 'utf8' })
      // reading `out` as a head fails (wrong magic) -> validation exit 1,
      // proving the file was reachable and parseable as data
      expect(result.status).toBe(1)
      expect(result.stderr).toContain('not an HSFM head checkpoint')
    }
  })
})

it('notes when the core CLI is unavailable', () => {
  if (!hsfmAvailable()) {
    console.warn('hsfm CLI not on PATH; integration tests skipped')
  }
  expect(true).toBe(true)
})
