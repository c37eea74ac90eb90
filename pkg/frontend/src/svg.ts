/** String-building SVG helpers. Fixed attribute order and fixed-precision
 * numbers keep renders byte-identical for identical inputs. */

export function fmt(x: number): string {
  const s = x.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  children: string | string[] = [],
): string {
  const attrText = Object.entries(attrs)
    .map(([k, v]) => ` ${k}="${typeof v === "number" ? fmt(v) : escapeXml(v)}"`)
    .join("");
  const body = Array.isArray(children) ? children.join("") : children;
  if (body === "") return `<${tag}${attrText}/>`;
  return `<${tag}${attrText}>${body}</${tag}>`;
}

export function text(
  x: number,
  y: number,
  content: string,
  attrs: Record<string, string | number> = {},
): string {
  return el("text", { x, y, ...attrs }, escapeXml(content));
}

const FONT = "font-family:Helvetica,Arial,sans-serif";

export function svgDoc(width: number, height: number, body: string[], title?: string): string {
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" style="${FONT}">`,
    el("rect", { x: 0, y: 0, width, height, fill: "#ffffff" }),
  ];
  if (title) {
    parts.push(
      text(width / 2, 24, title, { "text-anchor": "middle", "font-size": 16, "font-weight": "bold", fill: "#222222" }),
    );
  }
  parts.push(...body, "</svg>");
  return parts.join("\n") + "\n";
}
