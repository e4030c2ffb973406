import init, { twoChoice, singleChoice, effects } from "./pkg/pnp_web.js";

const $ = (id) => document.getElementById(id);

function table(head, rows) {
  const h = head.map((c) => `<th>${c}</th>`).join("");
  const b = rows.map((r) => "<tr>" + r.map((c) => `<td>${c}</td>`).join("") + "</tr>").join("");
  return `<table><tr>${h}</tr>${b}</table>`;
}

const bar = (p) => `<div class="bar" style="width:${(p * 200).toFixed(1)}px"></div>`;
const fmt = (p) => p.toFixed(4);

function show(id, json, render) {
  const v = JSON.parse(json);
  $(id).innerHTML = v.error ? `<p class="error">${v.error}</p>` : render(v);
}

function updateTwo() {
  const json = twoChoice(Number($("beam").value), Number($("b0").value), Number($("b1").value));
  show("two-out", json, (v) => {
    const execs = v.executions.map((e) => [
      e.trace.map((t) => `${t.tag}=${t.value}`).join(", "),
      e.value, fmt(e.score), fmt(e.prob), bar(e.prob),
    ]);
    const marg = v.marginal.map((e) => [e.value, fmt(e.prob), bar(e.prob)]);
    return "<h3>Executions</h3>" + table(["trace", "value", "score", "prob", ""], execs)
      + "<h3>Marginal</h3>" + table(["value", "prob", ""], marg);
  });
}

function updateSingle() {
  const scores = $("scores").value.split(",").map((s) => s.trim()).filter((s) => s).map(Number);
  show("single-out", singleChoice(new Float64Array(scores)), (ps) =>
    table(["option", "score", "prob", ""], ps.map((p, i) => [i, scores[i], fmt(p), bar(p)])));
}

function updateEffects() {
  show("effects-out", effects($("web").value, $("change").value, $("source").value.trim()), (rows) =>
    table(["organism", "effect"], rows.map((r) => [r.organism, r.effect])));
}

await init();
for (const id of ["beam", "b0", "b1"]) $(id).addEventListener("input", updateTwo);
$("scores").addEventListener("input", updateSingle);
for (const id of ["web", "change", "source"]) $(id).addEventListener("input", updateEffects);
updateTwo();
updateSingle();
updateEffects();
