import init, { level_curves, encircle, trapping } from "./pkg/epkit_web.js";

const COLORS = ["#1f5fbf", "#d0601a"];
const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// Draws each series of [x, y] pairs into a canvas with a shared box.
function plot(canvas, series, { title = "", xlabel = "", ylabel = "", dots = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const pts = series.flat().filter(([x, y]) => isFinite(x) && isFinite(y));
  if (!pts.length) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) { x0 -= 1; x1 += 1; }
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 1.5 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 1.8 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 0.8 * pad, w - 1.5 * pad, h - 1.8 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(title, pad, 0.55 * pad);
  ctx.fillText(xlabel, w / 2, h - 8);
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, 0.8 * pad + 10);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  ctx.save();
  ctx.translate(12, h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();

  series.forEach((s, k) => {
    ctx.strokeStyle = ctx.fillStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.forEach(([x, y], i) => {
      if (dots) ctx.fillRect(sx(x) - 1, sy(y) - 1, 2, 2);
      else if (i === 0) ctx.moveTo(sx(x), sy(y));
      else ctx.lineTo(sx(x), sy(y));
    });
    if (!dots) ctx.stroke();
  });
}

function show(id, text, error) {
  $(id).textContent = text;
  $(id).className = error ? "err" : "";
}

const zip = (xs, ys) => xs.map((x, i) => [x, ys[i]]);

function levels() {
  const w = num("lc-w");
  $("lc-wv").textContent = w.toFixed(3);
  const r = JSON.parse(level_curves(num("lc-g1"), num("lc-g2"), w, -1, 1, 801));
  if (r.error) return show("lc-out", r.error, true);
  show(
    "lc-out",
    `regime ${r.regime}   F_R at crossing ${r.f_real.toExponential(3)}   w_cr ${r.omega_cr}` +
      (r.continued ? "" : "   (branches unlabelled at the double pole)"),
  );
  plot($("lc-energy"), r.energy.map((e) => zip(r.lambdas, e)), { title: "E_k", xlabel: "l" });
  plot($("lc-width"), r.width.map((g) => zip(r.lambdas, g)), { title: "Gamma_k", xlabel: "l" });
}

function fmt(z) {
  const [re, im] = z.map((v) => (Math.abs(v) < 5e-13 ? 0 : v));
  return `${re.toFixed(4)}${im < 0 ? "-" : "+"}${Math.abs(im).toFixed(4)}i`;
}

function loop() {
  const r = JSON.parse(
    encircle(num("lc-g1"), num("lc-g2"), num("lp-cl"), num("lp-cw"), num("lp-r"),
      Math.round(num("lp-n")), $("lp-neg").checked, $("lp-rule").checked),
  );
  if (r.error) return show("lp-out", r.error, true);
  const rows = r.monodromy.map((row) => row.map(fmt).join("   ")).join("\n  ");
  show(
    "lp-out",
    `branches ${r.permutation.map((p, k) => `${k + 1}->${p + 1}`).join(", ")}   ` +
      `period ${r.period ?? "> 8"}   crossings ${r.crossings}\nM =\n  ${rows}`,
  );
  plot($("lp-path"), [r.path], { title: "path", xlabel: "l", ylabel: "w" });
  plot($("lp-values"), r.values, { title: "eigenvalues", xlabel: "Re", ylabel: "Im", dots: true });
}

function trap() {
  const a = num("tr-a");
  $("tr-av").textContent = a.toFixed(2);
  const r = JSON.parse(trapping(num("tr-d"), a, 5, 401));
  if (r.error) return show("tr-out", r.error, true);
  show("tr-out", `max |S+S - 1| on the grid ${r.unitarity_defect.toExponential(2)}`);
  plot($("tr-widths"), r.widths.map((g) => zip(r.alphas, g)), { title: "widths", xlabel: "alpha" });
  plot($("tr-phase"), [zip(r.energies, r.phase)], { title: "arg S_11", xlabel: "E" });
}

await init();
for (const id of ["lc-g1", "lc-g2", "lc-w"]) $(id).addEventListener("input", levels);
$("lp-go").addEventListener("click", loop);
for (const id of ["tr-d", "tr-a"]) $(id).addEventListener("input", trap);
levels();
loop();
trap();
