/**
 * Gallery store: single source of truth for the view, fed exclusively by
 * server responses.
 *
 * Invariants enforced here:
 *  - no optimistic updates: a card changes only after the server confirms;
 *  - exactly one stats refetch per confirmed toggle;
 *  - toggle requests are serialized per card (the next request for the same
 *    card waits for the previous one to settle).
 */

import { ApiClient, InstanceCard, StatsDoc } from "./api.js";

export interface GalleryView {
  cards: InstanceCard[];
  page: number;
  pageSize: number;
  total: number;
  pages: number;
  group: string | null;
  banner: string | null;
  stats: StatsDoc | null;
  statsStale: boolean;
  cursor: number;
  loading: boolean;
}

export type Listener = (view: GalleryView) => void;

export class GalleryStore {
  private view: GalleryView;
  private listeners: Listener[] = [];
  private togglesInFlight = new Map<string, Promise<void>>();

  constructor(
    private readonly api: ApiClient,
    pageSize: number = 24,
  ) {
    this.view = {
      cards: [],
      page: 0,
      pageSize,
      total: 0,
      pages: 0,
      group: null,
      banner: null,
      stats: null,
      statsStale: false,
      cursor: 0,
      loading: false,
    };
  }

  current(): GalleryView {
    return this.view;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private publish(patch: Partial<GalleryView>): void {
    this.view = { ...this.view, ...patch };
    for (const l of this.listeners) l(this.view);
  }

  async loadPage(page: number, group: string | null = this.view.group): Promise<void> {
    this.publish({ loading: true });
    try {
      const doc = await this.api.listInstances(group, page, this.view.pageSize);
      this.publish({
        cards: doc.items,
        page: doc.page,
        pageSize: doc.page_size,
        total: doc.total,
        pages: Math.ceil(doc.total / doc.page_size),
        group,
        banner: null,
        cursor: 0,
        loading: false,
      });
    } catch (err) {
      this.publish({ banner: `failed to load instances: ${describe(err)}`, loading: false });
    }
  }

  async refreshStats(): Promise<void> {
    try {
      const stats = await this.api.getStats();
      this.publish({ stats, statsStale: false });
    } catch (err) {
      this.publish({ statsStale: true, banner: `stats refresh failed: ${describe(err)}` });
    }
  }

  /**
   * Toggle one card's exclusion. Resolves after the server has confirmed
   * (or rejected) the change and the follow-up stats refresh has settled.
   */
  toggle(globalId: string, reason: string): Promise<void> {
    const previous = this.togglesInFlight.get(globalId) ?? Promise.resolve();
    const next = previous.then(() => this.doToggle(globalId, reason));
    this.togglesInFlight.set(
      globalId,
      next.catch(() => undefined),
    );
    return next;
  }

  private async doToggle(globalId: string, reason: string): Promise<void> {
    const card = this.view.cards.find((c) => c.global_id === globalId);
    if (!card) return;
    try {
      const entry = await this.api.setExclusion(globalId, !card.excluded, reason);
      // server truth only: rewrite the card from the confirmed entry
      this.publish({
        cards: this.view.cards.map((c) =>
          c.global_id === globalId
            ? { ...c, excluded: entry.excluded, reason: entry.reason }
            : c,
        ),
        banner: null,
      });
      await this.refreshStats(); // exactly one per confirmed toggle
    } catch (err) {
      this.publish({ banner: `exclusion update failed: ${describe(err)}` });
    }
  }

  moveCursor(delta: number): void {
    if (!this.view.cards.length) return;
    const cursor = Math.min(Math.max(this.view.cursor + delta, 0), this.view.cards.length - 1);
    this.publish({ cursor });
  }

  cursorCard(): InstanceCard | null {
    return this.view.cards[this.view.cursor] ?? null;
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
