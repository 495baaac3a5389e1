import { PlotArea, frame, xAxis, yAxis } from './axes.js';
import { Scale, linearScale, log10Scale, padDomain, ticks } from './scale.js';
import { HistogramRow, PowerRow, RmseRow, StarRow } from './tables.js';
import { svgDocument, tag, textTag } from './svg.js';

export interface FigureOptions {
  width?: number;
  height?: number;
  title?: string;
  /** Provenance note embedded as an XML comment, set by the file runner. */
  comment?: string;
}

export const PALETTE = [
  '#1f6fb2',
  '#d1495b',
  '#2e8b57',
  '#e09f3e',
  '#7b60a5',
  '#5f6c72',
];

const MARGIN = { left: 64, right: 16, top: 44, bottom: 52 };
const PANEL_GAP = 30;
const TITLE_COLOR = '#222222';

interface SeriesPoint {
  x: number;
  mean: number;
  se: number;
}

interface Series {
  name: string;
  color: string;
  points: SeriesPoint[];
}

function unique(values: string[]): string[] {
  const seen = new Set<string>();
  const out: string[] = [];
  for (const v of values) {
    if (!seen.has(v)) {
      seen.add(v);
      out.push(v);
    }
  }
  return out;
}

function panelAreas(count: number, width: number, height: number): PlotArea[] {
  const inner = width - MARGIN.left - MARGIN.right - PANEL_GAP * (count - 1);
  const panelWidth = inner / count;
  const areas: PlotArea[] = [];
  for (let i = 0; i < count; i++) {
    areas.push({
      left: MARGIN.left + i * (panelWidth + PANEL_GAP),
      top: MARGIN.top,
      width: panelWidth,
      height: height - MARGIN.top - MARGIN.bottom,
    });
  }
  return areas;
}

function legend(entries: { label: string; color: string }[], x: number, y: number): string {
  const parts: string[] = [];
  let cursor = x;
  for (const entry of entries) {
    parts.push(tag('rect', {
      x: cursor,
      y: y - 8,
      width: 10,
      height: 10,
      fill: entry.color,
    }));
    parts.push(textTag(entry.label, {
      x: cursor + 14,
      y,
      'font-size': 11,
      fill: TITLE_COLOR,
    }));
    cursor += 24 + entry.label.length * 6.2;
  }
  return parts.join('\n');
}

function titleText(title: string, width: number): string {
  if (title === '') return '';
  return textTag(title, {
    x: width / 2,
    y: 16,
    'text-anchor': 'middle',
    'font-size': 13,
    'font-weight': 'bold',
    fill: TITLE_COLOR,
  });
}

function panelTitle(area: PlotArea, text: string): string {
  return textTag(text, {
    x: area.left + area.width / 2,
    y: area.top - 6,
    'text-anchor': 'middle',
    'font-size': 11,
    fill: TITLE_COLOR,
  });
}

/** Polyline, point markers and mean +/- se whiskers for one panel. */
function curveSeries(series: Series[], sx: Scale, sy: Scale): string {
  const parts: string[] = [];
  for (const s of series) {
    const pts = [...s.points].sort((a, b) => a.x - b.x);
    if (pts.length > 1) {
      const coords = pts.map((p) => `${sx(p.x).toFixed(2)},${sy(p.mean).toFixed(2)}`);
      parts.push(tag('polyline', {
        points: coords.join(' '),
        fill: 'none',
        stroke: s.color,
        'stroke-width': 1.6,
      }));
    }
    for (const p of pts) {
      const x = sx(p.x);
      if (p.se > 0) {
        const yLo = sy(p.mean - p.se);
        const yHi = sy(p.mean + p.se);
        parts.push(tag('line', {
          x1: x,
          y1: yLo,
          x2: x,
          y2: yHi,
          stroke: s.color,
          'stroke-width': 1,
          'data-role': 'error-bar',
        }));
        for (const yEnd of [yLo, yHi]) {
          parts.push(tag('line', {
            x1: x - 3,
            y1: yEnd,
            x2: x + 3,
            y2: yEnd,
            stroke: s.color,
            'stroke-width': 1,
          }));
        }
      }
      parts.push(tag('circle', {
        cx: x,
        cy: sy(p.mean),
        r: 2.8,
        fill: s.color,
        'data-role': 'mean-point',
      }));
    }
  }
  return parts.join('\n');
}

function curveFigure(
  panels: { title: string; series: Series[] }[],
  opts: FigureOptions,
  xLabel: string,
  yLabel: string,
  xValues: number[],
  legendEntries: { label: string; color: string }[],
): string {
  const width = opts.width ?? 300 * panels.length + MARGIN.left + MARGIN.right;
  const height = opts.height ?? 320;
  const areas = panelAreas(panels.length, width, height);

  const allY: number[] = [];
  for (const panel of panels) {
    for (const s of panel.series) {
      for (const p of s.points) {
        allY.push(p.mean - p.se, p.mean + p.se);
      }
    }
  }
  const yDomainRaw = padDomain(allY);
  const yDomain: [number, number] = [Math.max(0, yDomainRaw[0]), yDomainRaw[1]];
  const xLo = Math.min(...xValues);
  const xHi = Math.max(...xValues);
  const xDomain: [number, number] =
    xLo === xHi ? [xLo / 2, xHi * 2] : [xLo / 1.35, xHi * 1.35];

  const parts: string[] = [titleText(opts.title ?? '', width)];
  panels.forEach((panel, i) => {
    const area = areas[i];
    const sx = log10Scale(xDomain, [area.left, area.left + area.width]);
    const sy = linearScale(yDomain, [area.top + area.height, area.top]);
    parts.push(frame(area));
    if (panel.title !== '') parts.push(panelTitle(area, panel.title));
    parts.push(yAxis(area, sy, ticks(yDomain[0], yDomain[1]), i === 0 ? yLabel : ''));
    parts.push(xAxis(area, sx, xValues, xLabel, (v) => String(v)));
    parts.push(curveSeries(panel.series, sx, sy));
  });
  parts.push(legend(legendEntries, MARGIN.left, height - 8));
  return svgDocument(width, height, parts.filter((p) => p !== '').join('\n'), opts.comment ?? '');
}

export function renderRmseCurves(rows: RmseRow[], opts: FigureOptions = {}): string {
  const scenarios = unique(rows.map((r) => r.scenario));
  const learners = unique(rows.map((r) => r.learner));
  const colors = new Map(learners.map((name, i) => [name, PALETTE[i % PALETTE.length]]));
  const panels = scenarios.map((scenario) => ({
    title: scenario,
    series: learners.map((learner) => ({
      name: learner,
      color: colors.get(learner)!,
      points: rows
        .filter((r) => r.scenario === scenario && r.learner === learner)
        .map((r) => ({ x: r.n0, mean: r.mean, se: r.se })),
    })).filter((s) => s.points.length > 0),
  }));
  const xValues = [...new Set(rows.map((r) => r.n0))].sort((a, b) => a - b);
  const entries = learners.map((name) => ({ label: name, color: colors.get(name)! }));
  return curveFigure(panels, opts, 'external rows (n0)', 'RMSE against true effect',
    xValues, entries);
}

export function renderStarCurves(rows: StarRow[], opts: FigureOptions = {}): string {
  const learners = unique(rows.map((r) => r.learner));
  const colors = new Map(learners.map((name, i) => [name, PALETTE[i % PALETTE.length]]));
  const panels = [{
    title: '',
    series: learners.map((learner) => ({
      name: learner,
      color: colors.get(learner)!,
      points: rows
        .filter((r) => r.learner === learner)
        .map((r) => ({ x: r.n0, mean: r.mean, se: r.se })),
    })).filter((s) => s.points.length > 0),
  }];
  const xValues = [...new Set(rows.map((r) => r.n0))].sort((a, b) => a - b);
  const entries = learners.map((name) => ({ label: name, color: colors.get(name)! }));
  return curveFigure(panels, opts, 'external rows (n0)', 'RMSE against trial proxy',
    xValues, entries);
}

export function renderPowerPanels(rows: PowerRow[], opts: FigureOptions = {}): string {
  const settings = unique(rows.map((r) => r.setting));
  const methods = unique(rows.map((r) => r.method));
  const colors = new Map(methods.map((name, i) => [name, PALETTE[i % PALETTE.length]]));
  const width = opts.width ?? 320 * settings.length + MARGIN.left + MARGIN.right;
  const height = opts.height ?? 340;
  const areas = panelAreas(settings.length, width, height);

  const xValues = [...new Set(rows.map((r) => r.n1))].sort((a, b) => a - b);
  const xDomain = padDomain(xValues, 0.15);
  const yDomain: [number, number] = [0, 1];

  const parts: string[] = [titleText(opts.title ?? '', width)];
  settings.forEach((setting, i) => {
    const area = areas[i];
    const sx = linearScale(xDomain, [area.left, area.left + area.width]);
    const sy = linearScale(yDomain, [area.top + area.height, area.top]);
    parts.push(frame(area));
    parts.push(panelTitle(area, `effect ${setting}`));
    parts.push(yAxis(area, sy, [0, 0.2, 0.4, 0.6, 0.8, 1], i === 0 ? 'rejection rate' : ''));
    parts.push(xAxis(area, sx, xValues, 'trial rows (n1)', (v) => String(v)));

    // nominal test level, the reference every rate is judged against
    const yNominal = sy(0.05);
    parts.push(tag('line', {
      x1: area.left,
      y1: yNominal,
      x2: area.left + area.width,
      y2: yNominal,
      stroke: '#b22222',
      'stroke-width': 1,
      'stroke-dasharray': '5 3',
      'data-role': 'nominal-level',
    }));
    parts.push(textTag('0.05', {
      x: area.left + area.width - 4,
      y: yNominal - 4,
      'text-anchor': 'end',
      'font-size': 10,
      fill: '#b22222',
    }));

    for (const method of methods) {
      const pts = rows
        .filter((r) => r.setting === setting && r.method === method)
        .sort((a, b) => a.n1 - b.n1);
      if (pts.length === 0) continue;
      const color = colors.get(method)!;
      if (pts.length > 1) {
        const coords = pts.map((p) => `${sx(p.n1).toFixed(2)},${sy(p.rate).toFixed(2)}`);
        parts.push(tag('polyline', {
          points: coords.join(' '),
          fill: 'none',
          stroke: color,
          'stroke-width': 1.6,
        }));
      }
      for (const p of pts) {
        parts.push(tag('circle', {
          cx: sx(p.n1),
          cy: sy(p.rate),
          r: 3,
          fill: color,
          'data-role': 'rate-point',
        }));
      }
    }
  });
  const entries = methods.map((name) => ({ label: name, color: colors.get(name)! }));
  parts.push(legend(entries, MARGIN.left, height - 8));
  return svgDocument(width, height, parts.join('\n'), opts.comment ?? '');
}

// The histogram CSV codes its source column with the row's s indicator.
function sourceLabel(source: string): string {
  if (source === '1') return 'trial';
  if (source === '0') return 'external';
  return source;
}

export function renderOverlapHistogram(rows: HistogramRow[], opts: FigureOptions = {}): string {
  const sources = unique(rows.map((r) => r.source));
  const colors = new Map(sources.map((name, i) => [name, PALETTE[i % PALETTE.length]]));
  const width = opts.width ?? 460;
  const height = opts.height ?? 320;
  const area = panelAreas(1, width, height)[0];

  const xDomain: [number, number] = [
    Math.min(...rows.map((r) => r.binLo)),
    Math.max(...rows.map((r) => r.binHi)),
  ];
  const yDomain: [number, number] = [0, Math.max(...rows.map((r) => r.count)) * 1.08 || 1];
  const sx = linearScale(xDomain, [area.left, area.left + area.width]);
  const sy = linearScale(yDomain, [area.top + area.height, area.top]);

  const parts: string[] = [titleText(opts.title ?? '', width), frame(area)];
  parts.push(yAxis(area, sy, ticks(0, yDomain[1]), 'rows'));
  parts.push(xAxis(area, sx, ticks(xDomain[0], xDomain[1]), 'estimated trial-membership probability'));
  for (const row of rows) {
    const x0 = sx(row.binLo);
    const x1 = sx(row.binHi);
    const yTop = sy(row.count);
    parts.push(tag('rect', {
      x: x0,
      y: yTop,
      width: Math.max(0.5, x1 - x0),
      height: Math.max(0, area.top + area.height - yTop),
      fill: colors.get(row.source)!,
      'fill-opacity': 0.55,
      'data-role': 'hist-bar',
      'data-source': row.source,
    }));
  }
  const entries = sources.map((name) => ({
    label: sourceLabel(name),
    color: colors.get(name)!,
  }));
  parts.push(legend(entries, MARGIN.left, height - 8));
  return svgDocument(width, height, parts.join('\n'), opts.comment ?? '');
}
