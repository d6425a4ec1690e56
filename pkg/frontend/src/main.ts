/** Browser glue: wires the controller and renderers into the page. */

import { ApiClient } from "./api";
import { ConsoleController, GatingError } from "./state";
import { renderBudgetGauge, renderRelease, renderTable, renderVerdict } from "./render";
import { DEFAULT_PHASE3, QueryJson } from "./types";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

export function bootConsole(baseUrl: string): ConsoleController {
  const controller = new ConsoleController(new ApiClient(baseUrl));

  controller.onChange((state) => {
    if (state.budget) {
      el("budget").innerHTML = renderBudgetGauge(
        state.budget,
        controller.explanationEnabled() ? DEFAULT_PHASE3 : undefined,
      );
    }
    el("release").innerHTML = state.release
      ? renderRelease(state.release, { selected: state.selectedGroups })
      : `<div class="empty-state">Run a query to see noisy answers.</div>`;
    el("verdict").innerHTML = state.verdict ? renderVerdict(state.verdict) : "";
    el("warning").innerHTML =
      controller.needsNoiseWarning() && !state.table
        ? `<div class="banner-amber">The question may be an artifact of the noise; further explanations might not be meaningful.</div>`
        : "";
    el("table").innerHTML = state.table ? renderTable(state.table) : "";
    el("error").textContent = state.lastError ?? "";
    (el("ask") as HTMLButtonElement).disabled =
      state.busy || controller.composedQuestion() === null;
    (el("explain") as HTMLButtonElement).disabled =
      state.busy || !controller.explanationEnabled() || !controller.canAffordPhase3(DEFAULT_PHASE3);
  });

  el("release").addEventListener("click", (event) => {
    const row = (event.target as HTMLElement).closest<HTMLElement>(".release-row");
    if (!row || !row.dataset.group) return;
    controller.toggleGroup(row.dataset.group);
  });

  el("run-query").addEventListener("click", async () => {
    const query = JSON.parse((el("query-json") as HTMLTextAreaElement).value) as QueryJson;
    const rho = Number((el("rho-query") as HTMLInputElement).value);
    try {
      await controller.runQuery(query, rho);
    } catch (error) {
      if (!(error instanceof GatingError)) throw error;
    }
  });

  el("ask").addEventListener("click", async () => {
    const gamma = Number((el("gamma") as HTMLInputElement).value);
    try {
      await controller.askQuestion(gamma);
    } catch (error) {
      if (!(error instanceof GatingError)) throw error;
    }
  });

  el("explain").addEventListener("click", async () => {
    try {
      await controller.requestExplanation(DEFAULT_PHASE3);
    } catch (error) {
      if (!(error instanceof GatingError)) throw error;
    }
  });

  return controller;
}
