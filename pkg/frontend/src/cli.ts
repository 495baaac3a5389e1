#!/usr/bin/env node
import { realpathSync } from 'node:fs';
import { pathToFileURL } from 'node:url';
import { parseArgs } from 'node:util';

import { SchemaError } from './csv.js';
import { FIGURE_KINDS, FigureJob, FigureKind, InputError, render } from './render.js';

const USAGE = `usage: catefuse-figures --kind <${FIGURE_KINDS.join('|')}> --input results.csv --output figure.svg
                        [--width N] [--height N] [--title TEXT]

Draws one benchmark CSV as an SVG figure. Exit codes: 0 success,
2 bad usage, 3 unreadable or schema-violating input, 1 anything else.`;

function usageError(message: string): number {
  console.error(`error[usage]: ${message}`);
  console.error(USAGE);
  return 2;
}

export function main(argv: string[]): number {
  let values: Record<string, string | boolean | undefined>;
  try {
    values = parseArgs({
      args: argv,
      options: {
        kind: { type: 'string' },
        input: { type: 'string' },
        output: { type: 'string' },
        width: { type: 'string' },
        height: { type: 'string' },
        title: { type: 'string' },
        help: { type: 'boolean', short: 'h' },
      },
    }).values;
  } catch (err) {
    return usageError(err instanceof Error ? err.message : String(err));
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  for (const key of ['kind', 'input', 'output'] as const) {
    if (values[key] === undefined) return usageError(`--${key} is required`);
  }
  const kind = values.kind as string;
  if (!(FIGURE_KINDS as readonly string[]).includes(kind)) {
    return usageError(`unknown kind "${kind}"; expected one of ${FIGURE_KINDS.join(', ')}`);
  }

  const sizes: { width?: number; height?: number } = {};
  for (const key of ['width', 'height'] as const) {
    const raw = values[key];
    if (raw === undefined) continue;
    const parsed = Number(raw);
    if (!Number.isFinite(parsed) || parsed <= 0) {
      return usageError(`--${key} must be a positive number, got "${raw}"`);
    }
    sizes[key] = parsed;
  }

  const job: FigureJob = {
    kind: kind as FigureKind,
    input: values.input as string,
    output: values.output as string,
    options: { ...sizes, title: values.title as string | undefined },
  };
  try {
    const report = render(job);
    console.log(`${job.kind}: ${job.input} sha256=${report.inputSha256} -> ${report.output}`);
    return 0;
  } catch (err) {
    if (err instanceof InputError || err instanceof SchemaError) {
      console.error(`error[input]: ${err.message}`);
      return 3;
    }
    console.error(`error[runtime]: ${err instanceof Error ? err.message : String(err)}`);
    return 1;
  }
}

const runDirectly = (() => {
  if (process.argv[1] === undefined) return false;
  try {
    return import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;
  } catch {
    return false;
  }
})();

if (runDirectly) {
  process.exitCode = main(process.argv.slice(2));
}
