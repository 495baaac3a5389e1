import { Scale } from './scale.js';
import { fmt, tag, textTag } from './svg.js';

/** Pixel rectangle a single panel draws into, axes excluded. */
export interface PlotArea {
  left: number;
  top: number;
  width: number;
  height: number;
}

const AXIS_COLOR = '#444444';
const GRID_COLOR = '#dddddd';
const FONT_SIZE = 11;

export function frame(area: PlotArea): string {
  return tag('rect', {
    x: area.left,
    y: area.top,
    width: area.width,
    height: area.height,
    fill: 'none',
    stroke: AXIS_COLOR,
    'stroke-width': 1,
  });
}

export function xAxis(
  area: PlotArea,
  scale: Scale,
  values: number[],
  label: string,
  format: (v: number) => string = fmt,
): string {
  const y0 = area.top + area.height;
  const parts: string[] = [];
  for (const v of values) {
    const x = scale(v);
    parts.push(tag('line', { x1: x, y1: y0, x2: x, y2: y0 + 4, stroke: AXIS_COLOR }));
    parts.push(textTag(format(v), {
      x,
      y: y0 + 16,
      'text-anchor': 'middle',
      'font-size': FONT_SIZE,
      fill: AXIS_COLOR,
    }));
  }
  parts.push(textTag(label, {
    x: area.left + area.width / 2,
    y: y0 + 32,
    'text-anchor': 'middle',
    'font-size': FONT_SIZE,
    fill: AXIS_COLOR,
  }));
  return parts.join('\n');
}

export function yAxis(
  area: PlotArea,
  scale: Scale,
  values: number[],
  label: string,
  format: (v: number) => string = fmt,
): string {
  const parts: string[] = [];
  for (const v of values) {
    const y = scale(v);
    parts.push(tag('line', {
      x1: area.left,
      y1: y,
      x2: area.left + area.width,
      y2: y,
      stroke: GRID_COLOR,
      'stroke-width': 0.5,
    }));
    parts.push(tag('line', { x1: area.left - 4, y1: y, x2: area.left, y2: y, stroke: AXIS_COLOR }));
    parts.push(textTag(format(v), {
      x: area.left - 7,
      y: y + 3.5,
      'text-anchor': 'end',
      'font-size': FONT_SIZE,
      fill: AXIS_COLOR,
    }));
  }
  const cx = area.left - 38;
  const cy = area.top + area.height / 2;
  parts.push(textTag(label, {
    x: cx,
    y: cy,
    'text-anchor': 'middle',
    'font-size': FONT_SIZE,
    fill: AXIS_COLOR,
    transform: `rotate(-90 ${fmt(cx)} ${fmt(cy)})`,
  }));
  return parts.join('\n');
}
