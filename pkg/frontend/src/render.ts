// Pure HTML builders. Keeping these free of DOM access makes them
// trivially unit-testable; app.ts owns the actual document.

import type {
  AlertView,
  GroupDetail,
  GroupSummary,
  Localization,
  ProvenanceNote,
} from "./api.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatTime(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").slice(0, 19);
}

export function severityBadge(sev: string): string {
  const safe = escapeHtml(sev);
  return `<span class="badge sev-${safe}">${safe}</span>`;
}

export function provenanceChips(notes: ProvenanceNote[]): string {
  const layers = [...new Set(notes.map((n) => n.layer))];
  return layers
    .map((l) => `<span class="chip chip-${escapeHtml(l)}">${escapeHtml(l)}</span>`)
    .join("");
}

export function groupRowHtml(g: GroupSummary): string {
  const votes = g.feedback.map((f) => (f.verdict === "up" ? "👍" : "👎")).join("");
  return `<tr class="group-row" data-group="${escapeHtml(g.group_id)}">
    <td class="mono">${escapeHtml(g.group_id)}</td>
    <td>${g.size}</td>
    <td>${g.severities.map(severityBadge).join(" ")}</td>
    <td>${g.entities.slice(0, 3).map(escapeHtml).join(", ")}${g.entities.length > 3 ? "…" : ""}</td>
    <td>${formatTime(g.interval[0])}</td>
    <td>${provenanceChips(g.provenance)}</td>
    <td>${votes}</td>
  </tr>`;
}

export function groupListHtml(groups: GroupSummary[]): string {
  if (groups.length === 0) {
    return `<p class="empty">No groups match the current filters.</p>`;
  }
  const rows = groups.map(groupRowHtml).join("\n");
  return `<table class="groups">
    <thead><tr><th>group</th><th>size</th><th>severity</th><th>entities</th>
    <th>start</th><th>layers</th><th>votes</th></tr></thead>
    <tbody>${rows}</tbody></table>`;
}

function alertRowHtml(a: AlertView): string {
  const e = a.event;
  return `<li class="alert">
    <label><input type="checkbox" class="flag" data-alert="${escapeHtml(e.id)}">
      doesn't belong</label>
    ${severityBadge(e.severity)}
    <span class="mono">${escapeHtml(e.id)}</span>
    <strong>${escapeHtml(e.title)}</strong>
    <span class="when">${formatTime(e.created_at)}</span>
    <div class="desc">${escapeHtml(e.description)}</div>
  </li>`;
}

export function groupDetailHtml(d: GroupDetail): string {
  return `<header>
    <h2>${escapeHtml(d.group_id)}</h2>
    ${provenanceChips(d.provenance)}
  </header>
  <ul class="alerts">${d.alerts.map(alertRowHtml).join("\n")}</ul>
  <div class="feedback">
    <button id="vote-up">👍 correct group</button>
    <button id="vote-down">👎 wrong group</button>
    <span id="feedback-status"></span>
  </div>`;
}

export function localizationHtml(loc: Localization): string {
  const roots = loc.roots
    .map((r) => {
      const why = loc.explanations[r];
      return `<li><span class="mono">${escapeHtml(r)}</span>` +
        (why ? ` — ${escapeHtml(why)}` : "") + `</li>`;
    })
    .join("");
  return `<h3>Probable roots</h3>
  <ul class="roots">${roots || "<li>none</li>"}</ul>
  <h3>Blast radius</h3>
  <p class="radius">${loc.blast_radius.map(escapeHtml).join(", ") || "—"}</p>`;
}

export function runBannerHtml(runId: string, status: string): string {
  return `<span class="mono">${escapeHtml(runId.slice(0, 12))}</span> ${escapeHtml(status)}`;
}
