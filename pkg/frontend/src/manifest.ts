/**
 * Dataset manifests: {"items": [{"id", "features", "label", "mask"}, ...]}
 * with labels "normal" / "anomalous" / null and mask paths only on anomalous
 * items. Paths are stored relative to the manifest's directory (posix
 * separators) so the output tree can be moved around.
 */

import * as fs from 'fs'
import * as path from 'path'
import { z } from 'zod'
import { ValidationError } from './ften'

const itemSchema = z.object({
  id: z.string().min(1),
  features: z.string().min(1),
  label: z.enum(['normal', 'anomalous']).nullable(),
  mask: z.string().nullable(),
})

const manifestSchema = z.object({ items: z.array(itemSchema) })

export interface ManifestItem {
  id: string
  features: string
  label: 'normal' | 'anomalous' | null
  mask: string | null
}

function toPosix(p: string): string {
  return p.split(path.sep).join(path.posix.sep)
}

export function saveManifest(items: ManifestItem[], manifestPath: string): void {
  const base = path.dirname(path.resolve(manifestPath))
  const rel = (p: string) => toPosix(path.isAbsolute(p) ? path.relative(base, p) : p)
  validateItems(items, manifestPath)
  const doc = {
    items: items.map(it => ({
      id: it.id,
      features: rel(it.features),
      label: it.label,
      mask: it.mask === null ? null : rel(it.mask),
    })),
  }
  fs.writeFileSync(manifestPath, JSON.stringify(doc, null, 2) + '\n')
}

function validateItems(items: ManifestItem[], name: string): void {
  const seen = new Set<string>()
  for (const it of items) {
    if (seen.has(it.id)) throw new ValidationError(`${name}: duplicate id ${JSON.stringify(it.id)}`)
    seen.add(it.id)
    if (it.mask !== null && it.label !== 'anomalous') {
      throw new ValidationError(
        `${name}: item ${JSON.stringify(it.id)} has a mask but label ${JSON.stringify(it.label)}`)
    }
  }
}

/** Load and validate a manifest; paths come back resolved. */
export function loadManifest(manifestPath: string): ManifestItem[] {
  const base = path.dirname(path.resolve(manifestPath))
  let doc: unknown
  try {
    doc = JSON.parse(fs.readFileSync(manifestPath, 'utf8'))
  } catch (e) {
    throw new ValidationError(`${manifestPath}: not valid JSON (${e})`)
  }
  const parsed = manifestSchema.safeParse(doc)
  if (!parsed.success) {
    throw new ValidationError(`${manifestPath}: ${parsed.error.issues[0]?.message ?? 'bad manifest'}`)
  }
  const items: ManifestItem[] = parsed.data.items.map(it => ({
    id: it.id,
    features: path.resolve(base, it.features),
    label: it.label,
    mask: it.mask === null ? null : path.resolve(base, it.mask),
  }))
  validateItems(items, manifestPath)
  return items
}
