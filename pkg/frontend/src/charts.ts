// SVG renderers for the lookup pane. Values are displayed exactly as the
// server sent them; the only arithmetic here is pixel placement.

import { DayCount, TagCount } from "./api.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) {
    el.setAttribute(k, v);
  }
  return el;
}

/** Score gauge: a filled bar plus the percentage to one decimal place. */
export function renderGauge(container: HTMLElement, percent: number): void {
  container.replaceChildren();
  const svg = svgElement("svg", {
    viewBox: "0 0 200 44",
    class: "gauge",
    role: "img",
  });
  svg.appendChild(svgElement("rect", {
    x: "0", y: "28", width: "200", height: "12",
    class: "gauge-track", fill: "#e5e5e5", rx: "6",
  }));
  svg.appendChild(svgElement("rect", {
    x: "0", y: "28", width: String(2 * percent), height: "12",
    class: "gauge-fill", fill: percent >= 50 ? "#c0392b" : "#2980b9", rx: "6",
  }));
  const label = svgElement("text", {
    x: "100", y: "18", "text-anchor": "middle", class: "gauge-label",
  });
  label.textContent = `${percent.toFixed(1)}%`;
  svg.appendChild(label);
  container.appendChild(svg);
}

/** Daily activity as a time series: one plotted bucket per server-provided day. */
export function renderActivityChart(container: HTMLElement, series: DayCount[]): void {
  container.replaceChildren();
  if (series.length === 0) {
    const note = document.createElement("p");
    note.className = "chart-empty";
    note.textContent = "no posts in range";
    container.appendChild(note);
    return;
  }
  const width = 320;
  const height = 120;
  const maxCount = Math.max(...series.map((d) => d.count), 1);
  const step = series.length > 1 ? width / (series.length - 1) : 0;
  const svg = svgElement("svg", {
    viewBox: `-10 -10 ${width + 20} ${height + 30}`,
    class: "activity-chart",
  });
  const points = series.map((d, i) => {
    const x = series.length > 1 ? i * step : width / 2;
    const y = height - (d.count / maxCount) * height;
    return { x, y, day: d };
  });
  if (points.length > 1) {
    svg.appendChild(svgElement("polyline", {
      points: points.map((p) => `${p.x},${p.y}`).join(" "),
      fill: "none", stroke: "#2980b9", "stroke-width": "2",
    }));
  }
  for (const p of points) {
    const dot = svgElement("circle", {
      cx: String(p.x), cy: String(p.y), r: "3.5",
      class: "bucket", "data-date": p.day.date, "data-count": String(p.day.count),
    });
    const title = svgElement("title", {});
    title.textContent = `${p.day.date}: ${p.day.count}`;
    dot.appendChild(title);
    svg.appendChild(dot);
  }
  container.appendChild(svg);
}

/** Top hashtags as horizontal bars, in the order the server ranked them. */
export function renderHashtagChart(container: HTMLElement, tags: TagCount[]): void {
  container.replaceChildren();
  if (tags.length === 0) {
    const note = document.createElement("p");
    note.className = "chart-empty";
    note.textContent = "no hashtags used";
    container.appendChild(note);
    return;
  }
  const rowHeight = 22;
  const maxCount = Math.max(...tags.map((t) => t.count), 1);
  const svg = svgElement("svg", {
    viewBox: `0 0 320 ${tags.length * rowHeight}`,
    class: "hashtag-chart",
  });
  tags.forEach((t, i) => {
    const y = i * rowHeight;
    svg.appendChild(svgElement("rect", {
      x: "110", y: String(y + 4), height: String(rowHeight - 8),
      width: String((t.count / maxCount) * 200),
      class: "hashtag-bar", "data-tag": t.tag, "data-count": String(t.count),
      fill: "#8e44ad",
    }));
    const label = svgElement("text", {
      x: "104", y: String(y + rowHeight - 8), "text-anchor": "end",
      class: "hashtag-label",
    });
    label.textContent = `#${t.tag} (${t.count})`;
    svg.appendChild(label);
  });
  container.appendChild(svg);
}
