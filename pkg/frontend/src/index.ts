export { SchemaError, parseTable, requireColumns } from './csv.js';
export type { Table } from './csv.js';
export { histogramRows, powerRows, rmseRows, starRows } from './tables.js';
export type { HistogramRow, PowerRow, RmseRow, StarRow } from './tables.js';
export {
  PALETTE,
  renderOverlapHistogram,
  renderPowerPanels,
  renderRmseCurves,
  renderStarCurves,
} from './figures.js';
export type { FigureOptions } from './figures.js';
export { FIGURE_KINDS, InputError, render } from './render.js';
export type { FigureJob, FigureKind, RenderReport } from './render.js';
