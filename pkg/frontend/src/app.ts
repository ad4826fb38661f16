import { ApiClient, ApiError, GroupFilters } from "./api.js";
import {
  groupDetailHtml,
  groupListHtml,
  localizationHtml,
  runBannerHtml,
} from "./render.js";

export class ConsoleApp {
  private selected: string | null = null;

  constructor(private api: ApiClient, private root: Document) {}

  private el(id: string): HTMLElement {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node;
  }

  private filters(): GroupFilters {
    const severity = (this.el("filter-severity") as HTMLSelectElement).value;
    const entity = (this.el("filter-entity") as HTMLInputElement).value.trim();
    const f: GroupFilters = {};
    if (severity) f.severity = severity;
    if (entity) f.entity = entity;
    return f;
  }

  async refreshGroups(): Promise<void> {
    const list = this.el("group-list");
    try {
      const groups = await this.api.getGroups(this.filters());
      list.innerHTML = groupListHtml(groups);
      for (const row of list.querySelectorAll<HTMLElement>(".group-row")) {
        row.addEventListener("click", () =>
          this.openGroup(row.dataset.group as string));
      }
    } catch (err) {
      list.innerHTML = `<p class="error">${this.describe(err)}</p>`;
    }
  }

  async openGroup(groupId: string): Promise<void> {
    this.selected = groupId;
    const panel = this.el("group-detail");
    const locPanel = this.el("localization");
    try {
      const detail = await this.api.getGroup(groupId);
      panel.innerHTML = groupDetailHtml(detail);
      this.el("vote-up").addEventListener("click", () => this.vote("up"));
      this.el("vote-down").addEventListener("click", () => this.vote("down"));
    } catch (err) {
      panel.innerHTML = `<p class="error">${this.describe(err)}</p>`;
      return;
    }
    try {
      const loc = await this.api.getLocalization(groupId);
      locPanel.innerHTML = localizationHtml(loc);
    } catch (err) {
      // localization is best-effort; a 404 just means nothing resolved
      locPanel.innerHTML =
        err instanceof ApiError && err.status === 404
          ? `<p class="empty">no localization for this group</p>`
          : `<p class="error">${this.describe(err)}</p>`;
    }
  }

  /** Collect per-alert "doesn't belong" checkboxes into feedback flags. */
  flaggedAlerts(): Record<string, boolean> {
    const flags: Record<string, boolean> = {};
    for (const box of this.root.querySelectorAll<HTMLInputElement>(
        "#group-detail .flag:checked")) {
      flags[box.dataset.alert as string] = false;
    }
    return flags;
  }

  async vote(verdict: "up" | "down"): Promise<void> {
    if (!this.selected) return;
    const status = this.el("feedback-status");
    const author =
      (this.el("author") as HTMLInputElement).value.trim() || "anonymous";
    try {
      const flags = verdict === "down" ? this.flaggedAlerts() : undefined;
      await this.api.postFeedback(this.selected, verdict, author, flags);
      status.textContent = `recorded ${verdict} vote`;
    } catch (err) {
      status.textContent = this.describe(err);
    }
  }

  async recorrelate(): Promise<void> {
    const banner = this.el("run-banner");
    try {
      const started = await this.api.recorrelate();
      banner.innerHTML = runBannerHtml(started.run_id, started.status);
      const finished = await this.api.waitForRun(started.run_id);
      banner.innerHTML = runBannerHtml(finished.run_id, finished.status);
      await this.refreshGroups();
      if (this.selected) await this.openGroup(this.selected).catch(() => {
        // the voted group may have been split away; clear the panel
        this.el("group-detail").innerHTML = "";
        this.selected = null;
      });
    } catch (err) {
      banner.textContent = this.describe(err);
    }
  }

  private describe(err: unknown): string {
    return err instanceof Error ? err.message : String(err);
  }

  wire(): void {
    this.el("refresh").addEventListener("click", () => this.refreshGroups());
    this.el("recorrelate").addEventListener("click", () => this.recorrelate());
    this.el("filter-severity").addEventListener("change", () =>
      this.refreshGroups());
    this.el("filter-entity").addEventListener("change", () =>
      this.refreshGroups());
  }
}
