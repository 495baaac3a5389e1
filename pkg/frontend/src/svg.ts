// Minimal SVG string assembly. Coordinates are rounded to two decimals so
// the same inputs always produce the same bytes.

const XML_ESCAPES: Record<string, string> = {
  '&': '&amp;',
  '<': '&lt;',
  '>': '&gt;',
  '"': '&quot;',
};

export function esc(text: string): string {
  return text.replace(/[&<>"]/g, (ch) => XML_ESCAPES[ch]);
}

export function fmt(value: number): string {
  return Number(value.toFixed(2)).toString();
}

function attrText(attrs: Record<string, string | number>): string {
  return Object.entries(attrs)
    .map(([key, value]) => `${key}="${typeof value === 'number' ? fmt(value) : esc(value)}"`)
    .join(' ');
}

export function tag(
  name: string,
  attrs: Record<string, string | number>,
  body = '',
): string {
  const head = attrText(attrs);
  const open = head === '' ? `<${name}` : `<${name} ${head}`;
  return body === '' ? `${open}/>` : `${open}>${body}</${name}>`;
}

export function textTag(content: string, attrs: Record<string, string | number>): string {
  return tag('text', attrs, esc(content));
}

export function svgDocument(
  width: number,
  height: number,
  body: string,
  comment = '',
): string {
  const open = `<svg ${attrText({
    xmlns: 'http://www.w3.org/2000/svg',
    width,
    height,
    viewBox: `0 0 ${fmt(width)} ${fmt(height)}`,
    'font-family': 'sans-serif',
  })}>`;
  const lines = [open];
  if (comment !== '') lines.push(`<!-- ${comment} -->`);
  lines.push(body, '</svg>', '');
  return lines.join('\n');
}
