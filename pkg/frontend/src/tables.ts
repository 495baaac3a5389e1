import { Table, isNanCell, num, requireColumns } from './csv.js';

// Typed readers for the four benchmark CSV contracts. Each reader checks
// its header up front so a wrong file fails with the column's name, and
// drops rows whose statistic is "nan" (a learner that failed every
// replication); everything else must parse as a finite number.

export interface RmseRow {
  learner: string;
  scenario: string;
  n1: number;
  n0: number;
  mean: number;
  se: number;
  reps: number;
}

export interface PowerRow {
  method: string;
  n1: number;
  setting: string;
  rate: number;
  reps: number;
}

export interface StarRow {
  learner: string;
  n1: number;
  n0: number;
  mean: number;
  se: number;
  reps: number;
}

export interface HistogramRow {
  source: string;
  binLo: number;
  binHi: number;
  count: number;
}

export function rmseRows(table: Table, label: string): RmseRow[] {
  requireColumns(table, ['learner', 'scenario', 'n1', 'n0', 'mean_rmse', 'se', 'R'], label);
  return table.rows
    .filter((row) => !isNanCell(row, 'mean_rmse'))
    .map((row) => ({
      learner: row.learner,
      scenario: row.scenario,
      n1: num(row, 'n1', label),
      n0: num(row, 'n0', label),
      mean: num(row, 'mean_rmse', label),
      se: num(row, 'se', label),
      reps: num(row, 'R', label),
    }));
}

export function powerRows(table: Table, label: string): PowerRow[] {
  requireColumns(table, ['method', 'n1', 'setting', 'rejection_rate', 'R'], label);
  return table.rows
    .filter((row) => !isNanCell(row, 'rejection_rate'))
    .map((row) => ({
      method: row.method,
      n1: num(row, 'n1', label),
      setting: row.setting,
      rate: num(row, 'rejection_rate', label),
      reps: num(row, 'R', label),
    }));
}

export function starRows(table: Table, label: string): StarRow[] {
  requireColumns(table, ['learner', 'n1', 'n0', 'mean_proxy_rmse', 'se', 'R'], label);
  return table.rows
    .filter((row) => !isNanCell(row, 'mean_proxy_rmse'))
    .map((row) => ({
      learner: row.learner,
      n1: num(row, 'n1', label),
      n0: num(row, 'n0', label),
      mean: num(row, 'mean_proxy_rmse', label),
      se: num(row, 'se', label),
      reps: num(row, 'R', label),
    }));
}

export function histogramRows(table: Table, label: string): HistogramRow[] {
  requireColumns(table, ['source', 'bin_lo', 'bin_hi', 'count'], label);
  return table.rows.map((row) => ({
    source: row.source,
    binLo: num(row, 'bin_lo', label),
    binHi: num(row, 'bin_hi', label),
    count: num(row, 'count', label),
  }));
}
