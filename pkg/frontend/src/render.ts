/**
 * Pure HTML renderers. Every number in the markup is a formatted copy of a
 * server-provided value; nothing is derived client-side.
 */

import { InstanceCard, StatsDoc } from "./api.js";
import { GalleryView } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Format a server value for display; null (unavailable) renders as a dash. */
export function fmt(value: number | null, digits = 4): string {
  if (value === null || value === undefined) return "—";
  return Number.isInteger(value) ? String(value) : value.toFixed(digits);
}

export function renderCard(card: InstanceCard, selected: boolean): string {
  const classes = ["card", card.excluded ? "excluded" : "", selected ? "selected" : ""]
    .filter(Boolean)
    .join(" ");
  const reason = card.excluded
    ? `<div class="reason">excluded: ${escapeHtml(card.reason || "(no reason)")}</div>`
    : "";
  return `
<article class="${classes}" data-gid="${escapeHtml(card.global_id)}">
  <img src="${escapeHtml(card.thumbnail_url)}" alt="${escapeHtml(card.global_id)}" loading="lazy">
  <header>${escapeHtml(card.global_id)}</header>
  <dl>
    <dt>perimeter</dt><dd>${fmt(card.perimeter_px)}</dd>
    <dt>area</dt><dd>${fmt(card.area_px)}</dd>
    <dt>radius</dt><dd>${fmt(card.radius_px)}</dd>
    <dt>non-smoothness</dt><dd>${fmt(card.non_smoothness)}</dd>
    <dt>non-circularity</dt><dd>${fmt(card.non_circularity)}</dd>
  </dl>
  ${reason}
  <div class="controls">
    <input class="reason-input" placeholder="reason" value="${escapeHtml(card.reason)}">
    <button class="toggle" data-gid="${escapeHtml(card.global_id)}">
      ${card.excluded ? "re-include" : "exclude"}
    </button>
  </div>
</article>`;
}

export function renderGallery(view: GalleryView): string {
  if (!view.cards.length) {
    return `<p class="placeholder">no instances</p>`;
  }
  return `<div class="grid">${view.cards
    .map((c, i) => renderCard(c, i === view.cursor))
    .join("\n")}</div>`;
}

export function renderPager(view: GalleryView): string {
  const last = Math.max(view.pages - 1, 0);
  return `
<nav class="pager">
  <button class="prev" ${view.page <= 0 ? "disabled" : ""}>prev</button>
  <span>page ${view.page + 1} of ${Math.max(view.pages, 1)} (${view.total} instances)</span>
  <button class="next" ${view.page >= last ? "disabled" : ""}>next</button>
</nav>`;
}

export function renderBanner(view: GalleryView): string {
  if (!view.banner) return "";
  return `<div class="banner" role="alert">${escapeHtml(view.banner)}</div>`;
}

/**
 * Group comparison table. Pairs missing from the server's test list (for
 * example when one group has no remaining instances) render as a dash;
 * significant pairs are marked with an asterisk.
 */
export function renderStats(stats: StatsDoc | null, stale = false): string {
  if (!stats) return `<p class="placeholder">statistics not loaded</p>`;
  const staleNote = stale ? `<p class="stale">showing stale statistics</p>` : "";
  const groups = [...new Set(stats.summaries.map((s) => s.group))].sort();
  const properties = [...new Set(stats.summaries.map((s) => s.property))];
  const nByGroup = new Map<string, number>();
  for (const s of stats.summaries) {
    nByGroup.set(s.group, Math.max(nByGroup.get(s.group) ?? 0, s.n));
  }
  const summaryRows = stats.summaries
    .map(
      (s) =>
        `<tr><td>${escapeHtml(s.group)}</td><td>${escapeHtml(s.property)}</td>` +
        `<td>${s.n}</td><td>${fmt(s.mean)}</td><td>${fmt(s.sd)}</td></tr>`,
    )
    .join("");
  const pairs: string[] = [];
  for (let i = 0; i < groups.length; i++) {
    for (let j = i + 1; j < groups.length; j++) {
      for (const prop of properties) {
        const test = stats.ttests.find(
          (t) => t.a === groups[i] && t.b === groups[j] && t.property === prop,
        );
        const cell = test
          ? `p=${fmt(test.p, 4)}${test.significant ? ` <span class="sig">*</span>` : ""}`
          : "—";
        pairs.push(
          `<tr><td>${escapeHtml(groups[i])}</td><td>${escapeHtml(groups[j])}</td>` +
            `<td>${escapeHtml(prop)}</td><td>${cell}</td></tr>`,
        );
      }
    }
  }
  return `
${staleNote}
<h3>group summaries (alpha=${stats.alpha})</h3>
<table class="summaries">
  <thead><tr><th>group</th><th>property</th><th>n</th><th>mean</th><th>sd</th></tr></thead>
  <tbody>${summaryRows}</tbody>
</table>
<h3>pairwise tests</h3>
<table class="ttests">
  <thead><tr><th>a</th><th>b</th><th>property</th><th>result</th></tr></thead>
  <tbody>${pairs.join("")}</tbody>
</table>`;
}
