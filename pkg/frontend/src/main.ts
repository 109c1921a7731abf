/**
 * DOM wiring: boots the store against the same-origin service, delegates
 * clicks and the j/k/x triage keys, and re-renders from store snapshots.
 */

import { ApiClient } from "./api.js";
import { renderBanner, renderGallery, renderPager, renderStats } from "./render.js";
import { GalleryStore } from "./state.js";

const DEFAULT_REASON = "debris";

function reasonFor(root: Element, globalId: string): string {
  const card = root.querySelector(`article[data-gid="${CSS.escape(globalId)}"]`);
  const input = card?.querySelector<HTMLInputElement>(".reason-input");
  return input?.value.trim() || DEFAULT_REASON;
}

export function boot(root: HTMLElement, store: GalleryStore): void {
  const bannerEl = root.querySelector("#banner") as HTMLElement;
  const galleryEl = root.querySelector("#gallery") as HTMLElement;
  const pagerEl = root.querySelector("#pager") as HTMLElement;
  const statsEl = root.querySelector("#stats") as HTMLElement;

  store.onChange((view) => {
    bannerEl.innerHTML = renderBanner(view);
    galleryEl.innerHTML = renderGallery(view);
    pagerEl.innerHTML = renderPager(view);
    statsEl.innerHTML = renderStats(view.stats, view.statsStale);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    if (target.matches("button.toggle")) {
      const gid = target.dataset.gid!;
      void store.toggle(gid, reasonFor(galleryEl, gid));
    } else if (target.matches("button.next")) {
      void store.loadPage(store.current().page + 1);
    } else if (target.matches("button.prev")) {
      void store.loadPage(store.current().page - 1);
    }
  });

  document.addEventListener("keydown", (event) => {
    if ((event.target as HTMLElement).tagName === "INPUT") return;
    if (event.key === "j") store.moveCursor(1);
    else if (event.key === "k") store.moveCursor(-1);
    else if (event.key === "x") {
      const card = store.cursorCard();
      if (card) void store.toggle(card.global_id, reasonFor(galleryEl, card.global_id));
    }
  });

  void store.loadPage(0).then(() => store.refreshStats());
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const store = new GalleryStore(new ApiClient());
  boot(document.getElementById("app")!, store);
}
