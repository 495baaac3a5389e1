import { createHash } from 'node:crypto';
import { readFileSync, writeFileSync } from 'node:fs';
import { basename } from 'node:path';

import { parseTable } from './csv.js';
import {
  FigureOptions,
  renderOverlapHistogram,
  renderPowerPanels,
  renderRmseCurves,
  renderStarCurves,
} from './figures.js';
import { histogramRows, powerRows, rmseRows, starRows } from './tables.js';

export type FigureKind = 'rmse' | 'power' | 'star' | 'overlap';

export const FIGURE_KINDS: readonly FigureKind[] = ['rmse', 'power', 'star', 'overlap'];

/** The input file could not be read (exit 3 at the command line). */
export class InputError extends Error {}

export interface FigureJob {
  kind: FigureKind;
  input: string;
  output: string;
  options?: FigureOptions;
}

export interface RenderReport {
  output: string;
  /** Hash of the raw input bytes; also embedded in the SVG itself. */
  inputSha256: string;
}

// The statistics in the CSV are drawn as-is: nothing here recomputes a
// mean, an SE or a rate. The input hash ties each figure back to the
// exact benchmark artifact it came from.
export function render(job: FigureJob): RenderReport {
  let bytes: Buffer;
  try {
    bytes = readFileSync(job.input);
  } catch {
    throw new InputError(`cannot read input file "${job.input}"`);
  }
  const inputSha256 = createHash('sha256').update(bytes).digest('hex');
  const label = basename(job.input);
  const table = parseTable(bytes.toString('utf8'), label);
  const options: FigureOptions = {
    ...job.options,
    comment: `input ${label} sha256 ${inputSha256}`,
  };

  let svg: string;
  switch (job.kind) {
    case 'rmse':
      svg = renderRmseCurves(rmseRows(table, label), options);
      break;
    case 'power':
      svg = renderPowerPanels(powerRows(table, label), options);
      break;
    case 'star':
      svg = renderStarCurves(starRows(table, label), options);
      break;
    case 'overlap':
      svg = renderOverlapHistogram(histogramRows(table, label), options);
      break;
  }

  writeFileSync(job.output, svg);
  return { output: job.output, inputSha256 };
}
