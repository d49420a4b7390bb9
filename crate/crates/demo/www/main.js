import init, { karateFit, simulateFit, imbalanceSweep } from "./pkg/egolsm_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);

function bounds(points) {
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  return { x0: Math.min(...xs), x1: Math.max(...xs), y0: Math.min(...ys), y1: Math.max(...ys) };
}

function scaler(canvas, b, pad = 24) {
  const span = Math.max(b.x1 - b.x0, b.y1 - b.y0) || 1;
  const size = Math.min(canvas.width, canvas.height) - 2 * pad;
  return (p) => [pad + ((p.x - b.x0) / span) * size, pad + ((b.y1 - p.y) / span) * size];
}

function show(id, text, failed = false) {
  const el = $(id);
  el.textContent = text;
  el.className = failed ? "info error" : "info";
}

function drawKarate(fit) {
  const canvas = $("k-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const at = scaler(canvas, bounds(fit.nodes));
  const byId = new Map(fit.nodes.map((n) => [n.id, n]));
  ctx.strokeStyle = "#ddd";
  for (const [i, j] of fit.edges) {
    const [x0, y0] = at(byId.get(i));
    const [x1, y1] = at(byId.get(j));
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
  }
  for (const n of fit.nodes) {
    const [x, y] = at(n);
    ctx.beginPath();
    ctx.arc(x, y, n.id === fit.center ? 9 : 6, 0, 2 * Math.PI);
    ctx.fillStyle = COLORS[n.group % COLORS.length];
    ctx.globalAlpha = n.in_view ? 1 : 0.35;
    ctx.fill();
    ctx.globalAlpha = 1;
    if (n.in_view) {
      ctx.strokeStyle = "#000";
      ctx.stroke();
    }
    ctx.fillStyle = "#333";
    ctx.fillText(String(n.id), x + 8, y - 6);
  }
}

function drawSimulation(fit) {
  const canvas = $("s-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const at = scaler(canvas, bounds([...fit.truth, ...fit.estimate]));
  fit.truth.forEach((t, i) => {
    const e = fit.estimate[i];
    const [x0, y0] = at(t);
    const [x1, y1] = at(e);
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    ctx.strokeStyle = COLORS[t.group % COLORS.length];
    ctx.beginPath();
    ctx.arc(x0, y0, 4, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = COLORS[e.group % COLORS.length];
    ctx.beginPath();
    ctx.arc(x1, y1, e.in_view ? 4 : 2.5, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function drawSweep(points) {
  const canvas = $("w-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pad = 32;
  const top = Math.max(...points.map((p) => p.u_s_normalized)) || 1;
  const px = (s) => pad + s * (canvas.width - 2 * pad);
  const py = (u) => canvas.height - pad - (u / top) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.fillText("share of neighbors from the center's community", pad, canvas.height - 8);
  ctx.fillText(top.toFixed(3), 2, pad + 4);
  ctx.strokeStyle = COLORS[0];
  ctx.beginPath();
  points.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, px(p.same_group_share), py(p.u_s_normalized)));
  ctx.stroke();
}

function run(infoId, f) {
  try {
    f();
  } catch (e) {
    show(infoId, String(e), true);
  }
}

function fitKarate() {
  run("k-info", () => {
    const fit = JSON.parse(karateFit(Number($("k-center").value), Number($("k-iters").value)));
    drawKarate(fit);
    show(
      "k-info",
      `|S| = ${fit.n_s}, observed pairs ${fit.observed_pairs}, imbalance ${fit.imbalance.toFixed(3)}, accuracy ${fit.accuracy.toFixed(3)}`,
    );
  });
}

function fitSimulation() {
  show("s-info", "fitting...");
  setTimeout(() =>
    run("s-info", () => {
      const fit = JSON.parse(simulateFit(Number($("s-n").value), $("s-scenario").value, Number($("s-seed").value), 500));
      drawSimulation(fit);
      show(
        "s-info",
        `|S| = ${fit.n_s}, relative error ${fit.relative_error.toFixed(3)} (init ${fit.relative_error_init.toFixed(3)}), ` +
          `U_S/|G*| = ${fit.u_s_normalized.toFixed(3)}, beta_hat ${fit.beta_hat.toFixed(3)}`,
      );
    }),
  );
}

function sweep() {
  const ns = Number($("w-ns").value);
  $("w-ns-value").textContent = String(ns);
  run("w-info", () => {
    const points = JSON.parse(imbalanceSweep(200, ns, 0, 40));
    drawSweep(points);
    const ends = [points[0], points[points.length - 1]];
    show("w-info", `U_S/|G*| from ${ends[0].u_s_normalized.toFixed(3)} to ${ends[1].u_s_normalized.toFixed(3)}`);
  });
}

await init();
for (let id = 1; id <= 34; id++) {
  $("k-center").add(new Option(String(id), String(id), id === 1, id === 1));
}
$("k-run").addEventListener("click", fitKarate);
$("s-run").addEventListener("click", fitSimulation);
$("w-ns").addEventListener("input", sweep);
fitKarate();
sweep();
