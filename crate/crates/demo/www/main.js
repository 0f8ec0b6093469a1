import init, { windowPreview, compareStrategies, domainPoints } from "./pkg/curricula_demo.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"];

function fail(el, e) {
  el.innerHTML = `<p class="err">${String(e)}</p>`;
}

function drawWindows() {
  const el = $("windows");
  let p;
  try {
    p = JSON.parse(windowPreview($("rle").value, Number($("retain").value)));
  } catch (e) {
    return fail(el, e);
  }
  const scale = 2, w = Math.max(p.n_frames * scale, 100);
  const c = document.createElement("canvas");
  c.width = w + 20;
  c.height = 90;
  const g = c.getContext("2d");
  p.labels.forEach((l, i) => {
    g.fillStyle = COLORS[l % COLORS.length];
    g.fillRect(10 + i * scale, 10, scale, 20);
  });
  for (const win of p.windows) {
    g.fillStyle = win.kept ? "#2ca02c" : "#d62728";
    g.fillRect(10 + win.start * scale + 1, 40, (win.end - win.start) * scale - 2, 12);
    g.fillStyle = "#222";
    for (const f of win.frames) g.fillRect(10 + f * scale, 56, 1, 8);
  }
  el.innerHTML = "";
  el.appendChild(c);
  const kept = p.windows.filter((x) => x.kept).length;
  const info = document.createElement("p");
  info.textContent = `${p.n_frames} frames, ${p.windows.length} full windows, ${kept} kept (threshold ${p.threshold} of 64). Ticks mark the 16 sampled frames.`;
  el.appendChild(info);
}

function drawDomains() {
  const el = $("domains");
  let clouds;
  try {
    clouds = JSON.parse(domainPoints(Number($("dseed").value), Number($("drot").value), Number($("dbias").value)));
  } catch (e) {
    return fail(el, e);
  }
  const size = 260;
  el.innerHTML = "";
  for (const cloud of clouds) {
    const xs = cloud.points.map((p) => p[0]), ys = cloud.points.map((p) => p[1]);
    const lim = Math.max(...xs.map(Math.abs), ...ys.map(Math.abs), 1e-9) * 1.05;
    const c = document.createElement("canvas");
    c.width = size;
    c.height = size + 20;
    const g = c.getContext("2d");
    g.fillStyle = "#222";
    g.fillText(cloud.name, 8, 14);
    for (const [x, y, l] of cloud.points) {
      g.fillStyle = COLORS[l % COLORS.length];
      g.fillRect(size / 2 + (x / lim) * (size / 2) - 1, 20 + size / 2 - (y / lim) * (size / 2) - 1, 2, 2);
    }
    el.appendChild(c);
  }
}

function runCompare() {
  $("table").textContent = "training...";
  // let the status paint before the synchronous call
  setTimeout(() => {
    try {
      const r = JSON.parse(compareStrategies(Number($("dseed").value), Number($("drot").value), Number($("dbias").value)));
      $("chart").innerHTML = r.scatter_svg;
      $("table").textContent = r.markdown;
    } catch (e) {
      $("table").textContent = "";
      fail($("chart"), e);
    }
  }, 20);
}

await init();
$("preview").onclick = drawWindows;
for (const id of ["dseed", "drot", "dbias"]) $(id).oninput = drawDomains;
$("compare").onclick = runCompare;
drawWindows();
drawDomains();
