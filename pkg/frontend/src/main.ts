/** DOM wiring: poll loop, pending-episode panel, progress charts. */

import { ApiClient } from "./api.js";
import { buildRewardSeries, buildStdBlocks } from "./charts.js";
import { OperatorController, SLIDER_STEP } from "./state.js";
import { renderChart, renderSchematic } from "./svg.js";
import { GraspParamsDoc } from "./types.js";

const client = new ApiClient("");
const controller = new OperatorController(client);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function paramsTable(xi: GraspParamsDoc, eps: number[], executed: GraspParamsDoc): string {
  const rows: string[] = [];
  const blocks: Array<[string, number[], number[], number]> = [
    ["contact (m)", xi.mu, executed.mu, 0],
    ["wrist (rad)", xi.theta_wrist, executed.theta_wrist, 3],
    ["hand (rad)", xi.pose, executed.pose, 6],
  ];
  for (const [label, prior, exec, offset] of blocks) {
    prior.forEach((value, i) => {
      rows.push(
        `<tr><td>${label}[${i}]</td><td>${value.toFixed(4)}</td>` +
          `<td>${(eps[offset + i] ?? 0).toFixed(4)}</td>` +
          `<td>${(exec[i] ?? 0).toFixed(4)}</td></tr>`,
      );
    });
  }
  return (
    "<table><thead><tr><th>dim</th><th>prior</th><th>residual</th><th>executed</th>" +
    "</tr></thead><tbody>" + rows.join("") + "</tbody></table>"
  );
}

function render(): void {
  if (controller.fatal !== null) {
    document.body.innerHTML =
      `<main class="fatal"><h1>Incompatible server</h1><p>${controller.fatal}</p>` +
      `<p>Reload after upgrading the UI or the harness.</p></main>`;
    return;
  }
  el("banner").textContent = controller.banner ?? "";
  el("banner").className = controller.banner ? "banner show" : "banner";

  const s = controller.session;
  if (s) {
    el("session-title").textContent = `${s.display_name} (${s.task_id})`;
    const warm = s.episode_count < s.warmup ? " — warm-up" : "";
    el("session-meta").textContent =
      `episode ${Math.min(s.episode_count + 1, s.episodes_total)}/${s.episodes_total}` +
      `${warm} · reward: ${s.reward_mode} · elites ${s.elites} · state ${s.state}`;
  }

  const pendingPanel = el("pending");
  if (controller.pending) {
    const p = controller.pending;
    el("pending-title").textContent = `Episode ${p.index} awaits a score`;
    el("schematic").innerHTML = renderSchematic(p.schematic);
    el("params").innerHTML = paramsTable(p.xi, p.eps, p.executed);
    pendingPanel.classList.remove("hidden");
  } else {
    el("pending-title").textContent =
      controller.phase === "waiting" ? "Waiting for the next episode…" : "No pending episode";
    el("schematic").innerHTML = "";
    el("params").innerHTML = "";
    pendingPanel.classList.toggle("hidden", false);
  }

  const slider = el("reward-slider") as HTMLInputElement;
  slider.disabled = controller.pending === null || controller.slider.locked;
  const submit = el("submit") as HTMLButtonElement;
  submit.disabled = !controller.submitEnabled;
  el("slider-value").textContent = controller.slider.touched
    ? controller.slider.value.toFixed(2)
    : "touch the slider to enable submit";
  el("notice").textContent = controller.notice ?? "";

  if (controller.history.length === 0) {
    el("reward-chart").innerHTML = "<p class='empty'>No episodes yet.</p>";
    el("std-chart").innerHTML = "";
  } else {
    const series = buildRewardSeries(controller.history);
    el("reward-chart").innerHTML = renderChart(
      [
        { xs: series.episodes, ys: series.rewards, color: "#4a7dd0", kind: "scatter" },
        { xs: series.episodes, ys: series.movingAvg, color: "#c0392b", kind: "line" },
      ],
      { markerX: controller.session?.warmup, yMin: 0, yMax: 1 },
    );
    if (controller.distribution) {
      const std = buildStdBlocks(controller.distribution);
      el("std-chart").innerHTML = renderChart(
        [
          { xs: std.episodes, ys: std.mu, color: "#4a7dd0", kind: "line" },
          { xs: std.episodes, ys: std.theta, color: "#c0392b", kind: "line" },
          { xs: std.episodes, ys: std.pose, color: "#27a05f", kind: "line" },
        ],
        { markerX: std.warmupBoundary },
      );
    }
  }
}

async function loop(): Promise<void> {
  await controller.tick();
  render();
  if (controller.fatal === null) {
    setTimeout(loop, controller.nextPollMs);
  }
}

function wire(): void {
  const slider = el("reward-slider") as HTMLInputElement;
  slider.step = String(SLIDER_STEP);
  slider.addEventListener("input", () => {
    controller.sliderInput(Number(slider.value));
    render();
  });
  el("submit").addEventListener("click", () => {
    void controller.submit().then(render);
  });
  void loop();
}

document.addEventListener("DOMContentLoaded", wire);
