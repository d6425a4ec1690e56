import { describe, expect, it } from "vitest";

import { renderBudgetGauge, renderRelease, renderTable, renderVerdict } from "../src/render";
import { BudgetJson, DEFAULT_PHASE3, ReleaseJson, TableJson, VerdictJson } from "../src/types";
import { SAMPLE_RELEASE, SAMPLE_TABLE } from "./mock_service";

function countMatches(haystack: string, needle: RegExp): number {
  return (haystack.match(needle) ?? []).length;
}

describe("renderRelease", () => {
  it("shows one row per group, quotient only for AVG", () => {
    const html = renderRelease(SAMPLE_RELEASE);
    expect(countMatches(html, /release-row/g)).toBe(7);
    expect(html).toContain("0.446021");
    expect(html).not.toContain("sum_component");
    expect(html).not.toContain("22412.5"); // components stay off the screen
  });

  it("renders an empty state for an empty release", () => {
    const empty: ReleaseJson = { ...SAMPLE_RELEASE, results: [] };
    expect(renderRelease(empty)).toContain("empty-state");
  });

  it("marks selected rows", () => {
    const html = renderRelease(SAMPLE_RELEASE, { selected: ["Divorced"] });
    expect(countMatches(html, /selected/g)).toBe(1);
  });

  it("sorts by noisy value stably", () => {
    const tied: ReleaseJson = {
      ...SAMPLE_RELEASE,
      results: [
        { group: "first", value: 1.0 },
        { group: "second", value: 1.0 },
        { group: "third", value: 2.0 },
      ],
    };
    const html = renderRelease(tied, { sortByValue: true });
    const order = [...html.matchAll(/data-group="([^"]+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["third", "first", "second"]); // ties keep served order
  });

  it("escapes group labels", () => {
    const sneaky: ReleaseJson = {
      ...SAMPLE_RELEASE,
      results: [{ group: "<script>", value: 1.0 }],
    };
    expect(renderRelease(sneaky)).not.toContain("<script>");
  });
});

describe("renderVerdict", () => {
  it("is green for an interval strictly above zero", () => {
    const verdict: VerdictJson = {
      interval: { lower: 0.399, upper: 0.402, level: 0.95, trivial: false },
      verdict: "supported",
    };
    const html = renderVerdict(verdict);
    expect(html).toContain("banner-green");
    expect(html).toContain("possibly not the reason");
    expect(html).toContain("(0.399, 0.402)");
    expect(html).toContain("zero-mark");
  });

  it("is amber when the interval crosses zero", () => {
    const verdict: VerdictJson = {
      interval: { lower: -0.259, upper: 0.46, level: 0.95, trivial: false },
      verdict: "possibly-noise",
    };
    const html = renderVerdict(verdict);
    expect(html).toContain("banner-amber");
    expect(html).toContain("possibly the reason");
  });

  it("renders the trivial interval as an amber full-width bar", () => {
    const verdict: VerdictJson = {
      interval: { lower: null, upper: null, level: 0.95, trivial: true },
      verdict: "possibly-noise",
    };
    const html = renderVerdict(verdict);
    expect(html).toContain("banner-amber");
    expect(html).toContain("width:100%");
    expect(html).toContain("(-inf, +inf)");
  });
});

describe("renderTable", () => {
  it("renders five columns and keeps the served row order", () => {
    const html = renderTable(SAMPLE_TABLE);
    expect(countMatches(html, /<th>/g)).toBe(5);
    const first = html.indexOf("Exec-managerial");
    const last = html.indexOf("Own-child");
    expect(first).toBeGreaterThan(-1);
    expect(last).toBeGreaterThan(first); // no client-side re-sort
  });

  it("formats relative influence as percentages with two decimals", () => {
    const html = renderTable(SAMPLE_TABLE);
    expect(html).toContain("3.25%");
    expect(html).toContain("10.12%");
  });

  it("flags a negative lower bound with its sign", () => {
    const html = renderTable(SAMPLE_TABLE);
    expect(html).toContain("-0.49%");
    expect(html).toContain("includes zero influence");
    expect(countMatches(html, /spans-zero/g)).toBe(1);
  });

  it("notes raw influence when the divisor degenerated", () => {
    const raw: TableJson = { ...SAMPLE_TABLE, relative: false };
    const html = renderTable(raw);
    expect(html).toContain("raw influence");
    expect(html).not.toContain("%</td>");
  });
});

describe("renderBudgetGauge", () => {
  const budget: BudgetJson = {
    total: 2.1,
    spent: 0.1,
    remaining: 2.0,
    charges: [{ label: "query", rho: 0.1 }],
  };

  it("shows remaining/total and itemized charges", () => {
    const html = renderBudgetGauge(budget);
    expect(html).toContain("remaining 2.000 of 2.100");
    expect(html).toContain("query");
  });

  it("previews phase-3 cost and enables the confirm button when it fits", () => {
    const html = renderBudgetGauge(budget, DEFAULT_PHASE3);
    expect(html).toContain("rho = 2.000");
    expect(html).not.toContain("disabled");
  });

  it("disables the confirm button when the preview exceeds the remaining budget", () => {
    const tight: BudgetJson = { ...budget, spent: 1.2, remaining: 0.9 };
    const html = renderBudgetGauge(tight, DEFAULT_PHASE3);
    expect(html).toContain("over-budget");
    expect(html).toContain("disabled");
  });
});
