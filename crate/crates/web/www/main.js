import init, { Demo } from "./pkg/radioplan_web.js";

const SCALE = 8;
const FIXTURES = "../../core/fixtures/osm/";
const canvas = document.getElementById("map");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const report = document.getElementById("report");
let demo = null;

function load(xml) {
  demo?.free();
  demo = new Demo(xml, 5.0);
  const s = JSON.parse(demo.summary());
  canvas.width = s.width * SCALE;
  canvas.height = s.height * SCALE;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  report.textContent = "";
  status.textContent = `${s.buildings} buildings, ${s.width}×${s.height} cells, ${s.outdoor_cells} outdoor`;
}

async function draw() {
  const png = demo.render(SCALE);
  const bitmap = await createImageBitmap(new Blob([png], { type: "image/png" }));
  ctx.drawImage(bitmap, 0, 0);
  const snap = JSON.parse(demo.snapshot());
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 2;
  for (const [fx, fy] of snap.markers) {
    ctx.beginPath();
    ctx.arc(fx * canvas.width, fy * canvas.height, 5, 0, 2 * Math.PI);
    ctx.stroke();
  }
  const c = snap.coverage;
  report.textContent =
    `stations: ${snap.stations.length}\n` +
    `PL ≤ ${c.pl_threshold_db} dB: ${(100 * c.pl_compliant_fraction).toFixed(1)}%\n` +
    `SINR > ${c.sinr_threshold_db} dB: ${(100 * c.sinr_compliant_fraction).toFixed(1)}%`;
}

async function loadFixture(name) {
  const res = await fetch(`${FIXTURES}${name}.osm`);
  load(await res.text());
}

function guard(fn) {
  return async (...args) => {
    try {
      await fn(...args);
    } catch (e) {
      status.textContent = `error: ${e.message ?? e}`;
    }
  };
}

canvas.addEventListener("click", guard(async (ev) => {
  const r = canvas.getBoundingClientRect();
  if (!demo.add_station((ev.clientX - r.left) / r.width, (ev.clientY - r.top) / r.height)) {
    status.textContent = "indoors or off the map";
    return;
  }
  await draw();
}));

for (const radio of document.querySelectorAll("input[name=view]")) {
  radio.addEventListener("change", guard(async () => {
    demo.set_view(radio.value);
    if (demo.snapshot()) await draw();
  }));
}

document.getElementById("clear").addEventListener("click", guard(async () => {
  demo.clear_stations();
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  report.textContent = "";
}));

document.getElementById("optimize").addEventListener("click", guard(async () => {
  status.textContent = "optimizing…";
  await new Promise((r) => setTimeout(r, 0));
  const seed = Number(document.getElementById("seed").value) || 0;
  const compliant = demo.optimize(seed, 2000);
  await draw();
  status.textContent = compliant ? "plan meets the 80% target" : "plan misses the 80% target";
}));

document.getElementById("scene").addEventListener("change", guard(async (ev) => loadFixture(ev.target.value)));
document.getElementById("osm-file").addEventListener("change", guard(async (ev) => {
  const file = ev.target.files[0];
  if (file) load(await file.text());
}));

await init();
await guard(loadFixture)("synthetic_urban");
