/** Pure renderers: service JSON in, HTML strings out. The console displays
 * noisy values only; nothing here ever sees a true aggregate, influence or
 * rank. Row order of the explanation table is exactly as served. */

import {
  BudgetJson,
  GroupValue,
  NoisyGroupRow,
  Phase3Params,
  ReleaseJson,
  TableJson,
  VerdictJson,
} from "./types";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatValue(value: number | null): string {
  if (value === null || Number.isNaN(value)) return "undefined";
  return value.toFixed(6);
}

export interface ReleaseViewOptions {
  selected?: GroupValue[];
  sortByValue?: boolean;
}

/** One row per released group; AVG shows the quotient only. Rows are
 * clickable (data-group) so the analyst can pick two groups to question. */
export function renderRelease(release: ReleaseJson, options: ReleaseViewOptions = {}): string {
  if (release.results.length === 0) {
    return `<div class="empty-state">The release contains no groups.</div>`;
  }
  const selected = options.selected ?? [];
  let rows: NoisyGroupRow[] = [...release.results];
  if (options.sortByValue) {
    // stable sort: equal values keep their served order
    rows = rows
      .map((row, index) => ({ row, index }))
      .sort((a, b) => (b.row.value ?? -Infinity) - (a.row.value ?? -Infinity) || a.index - b.index)
      .map((entry) => entry.row);
  }
  const body = rows
    .map((row) => {
      const isSelected = selected.includes(row.group);
      return (
        `<tr class="release-row${isSelected ? " selected" : ""}" data-group="${escapeHtml(row.group)}">` +
        `<td>${escapeHtml(row.group)}</td>` +
        `<td class="num">${formatValue(row.value)}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="release">` +
    `<thead><tr><th>group</th><th>Priv-answer</th></tr></thead>` +
    `<tbody>${body}</tbody></table>`
  );
}

const SUPPORTED_TEXT = "hence the noise in the query is possibly not the reason";
const NOISE_TEXT = "hence the noise in the query is possibly the reason";

/** Banner plus an interval bar on a number line with zero marked. Green when
 * the interval sits strictly above zero, amber otherwise. */
export function renderVerdict(verdict: VerdictJson): string {
  const interval = verdict.interval;
  const supported = verdict.verdict === "supported";
  const tone = supported ? "green" : "amber";
  const phrase = supported ? SUPPORTED_TEXT : NOISE_TEXT;
  let intervalText: string;
  let bar: string;
  if (interval.trivial || interval.lower === null || interval.upper === null) {
    intervalText = "(-inf, +inf)";
    bar = `<div class="interval-bar trivial" style="left:0%;width:100%"></div>`;
  } else {
    intervalText = `(${interval.lower.toFixed(3)}, ${interval.upper.toFixed(3)})`;
    // place the interval on a symmetric axis around zero
    const span = Math.max(Math.abs(interval.lower), Math.abs(interval.upper), 1e-9) * 2.2;
    const toPercent = (x: number) => ((x + span / 2) / span) * 100;
    const left = toPercent(interval.lower);
    const width = Math.max(toPercent(interval.upper) - left, 0.5);
    bar = `<div class="interval-bar" style="left:${left.toFixed(2)}%;width:${width.toFixed(2)}%"></div>`;
  }
  return (
    `<div class="verdict banner-${tone}">` +
    `<p>The ${(interval.level * 100).toFixed(0)}% confidence interval of the group difference is ` +
    `<strong>${intervalText}</strong>, ${phrase}.</p>` +
    `<div class="number-line">${bar}<div class="zero-mark" style="left:50%"></div></div>` +
    `</div>`
  );
}

function formatBound(value: number, relative: boolean): string {
  return relative ? `${(value * 100).toFixed(2)}%` : value.toFixed(2);
}

function describePredicate(atoms: { attr: string; op: string; value: GroupValue }[]): string {
  return atoms.map((a) => `${a.attr} ${a.op} "${a.value}"`).join(" AND ");
}

/** Explanation grid: predicate, L/U relative influence, L/U rank. Rows keep
 * the served order (the server owns the sort). A lower bound at or below
 * zero is flagged: that predicate's influence may be nothing at all. */
export function renderTable(table: TableJson): string {
  const header =
    `<thead><tr><th>explanation predicate</th>` +
    `<th>Rel Influ ${(table.level * 100).toFixed(0)}%-CI L</th>` +
    `<th>Rel Influ ${(table.level * 100).toFixed(0)}%-CI U</th>` +
    `<th>Rank ${(table.level * 100).toFixed(0)}%-CI L</th>` +
    `<th>Rank ${(table.level * 100).toFixed(0)}%-CI U</th></tr></thead>`;
  const body = table.rows
    .map((row) => {
      const spansZero = row.rel_influ_ci.lower <= 0;
      const flag = spansZero ? ` <span class="flag">includes zero influence</span>` : "";
      return (
        `<tr${spansZero ? ' class="spans-zero"' : ""}>` +
        `<td>${escapeHtml(describePredicate(row.predicate))}${flag}</td>` +
        `<td class="num">${formatBound(row.rel_influ_ci.lower, table.relative)}</td>` +
        `<td class="num">${formatBound(row.rel_influ_ci.upper, table.relative)}</td>` +
        `<td class="num">${row.rank_ci.lower}</td>` +
        `<td class="num">${row.rank_ci.upper}</td>` +
        `</tr>`
      );
    })
    .join("");
  const note = table.relative
    ? ""
    : `<p class="note">Shown as raw influence: the noisy group gap was too small to scale by.</p>`;
  return `${note}<table class="explanation">${header}<tbody>${body}</tbody></table>`;
}

/** Remaining/total gauge with itemized charges and an optional phase-3 cost
 * preview; the confirm button is disabled when the preview does not fit. */
export function renderBudgetGauge(budget: BudgetJson, preview?: Phase3Params): string {
  const used = budget.total > 0 ? (budget.spent / budget.total) * 100 : 0;
  const items = budget.charges
    .map((c) => `<li><span>${escapeHtml(c.label)}</span><span>${c.rho}</span></li>`)
    .join("");
  let previewHtml = "";
  if (preview) {
    const cost = preview.rho_topk + preview.rho_influ + preview.rho_rank;
    const affordable = cost <= budget.remaining + 1e-12;
    previewHtml =
      `<div class="preview${affordable ? "" : " over-budget"}">` +
      `Explanation will cost rho = ${cost.toFixed(3)} ` +
      `(top-k ${preview.rho_topk} + influence ${preview.rho_influ} + rank ${preview.rho_rank})` +
      `<button class="confirm-phase3"${affordable ? "" : " disabled"}>spend &amp; explain</button>` +
      `</div>`;
  }
  return (
    `<div class="budget">` +
    `<div class="gauge"><div class="gauge-fill" style="width:${used.toFixed(1)}%"></div></div>` +
    `<p>remaining ${budget.remaining.toFixed(3)} of ${budget.total.toFixed(3)}</p>` +
    `<ul class="charges">${items}</ul>` +
    previewHtml +
    `</div>`
  );
}
