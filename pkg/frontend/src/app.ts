/**
 * Application shell: routes to one of three views, keeps at most one
 * in-flight request (cancelled on navigation), and re-polls the similar
 * view while the pipeline is still embedding a product.
 */

import { ApiClient, ApiError } from './api.js';
import { Router, Route, searchHash } from './router.js';
import {
  errorBanner,
  pendingBanner,
  resultsGrid,
  searchForm,
  spinner,
  uploadForm,
} from './views.js';

const POLL_MS = 1500;

export class App {
  private inflight: AbortController | null = null;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private rootEl: HTMLElement,
    private api: ApiClient,
    private router: Router,
  ) {
    router.onChange((route) => void this.render(route));
  }

  start(): void {
    this.router.emit();
  }

  private beginRequest(): AbortSignal {
    this.inflight?.abort();
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
    this.inflight = new AbortController();
    return this.inflight.signal;
  }

  private nav = (hash: string) => this.router.navigate(hash);

  private chrome(route: Route): HTMLElement {
    const bar = document.createElement('nav');
    bar.className = 'topbar';
    bar.appendChild(
      searchForm(route.kind === 'search' ? route.query : '', (q) =>
        this.nav(searchHash(q)),
      ),
    );
    const imageLink = document.createElement('a');
    imageLink.href = '#/image';
    imageLink.textContent = 'search by image';
    imageLink.className = 'image-link';
    bar.appendChild(imageLink);
    return bar;
  }

  private swap(route: Route, ...children: HTMLElement[]): void {
    this.rootEl.replaceChildren(this.chrome(route), ...children);
  }

  async render(route: Route): Promise<void> {
    if (route.kind === 'search') return this.renderSearch(route.query);
    if (route.kind === 'similar') return this.renderSimilar(route.docId);
    return this.renderImageQuery();
  }

  private async renderSearch(query: string): Promise<void> {
    const route: Route = { kind: 'search', query };
    if (!query) {
      this.swap(route, resultsGrid([], this.nav, 'type a query to search the catalog'));
      return;
    }
    const signal = this.beginRequest();
    this.swap(route, spinner());
    try {
      const resp = await this.api.search(query, { limit: 40, signal });
      this.swap(route, resultsGrid(resp.items, this.nav, `nothing found for “${query}”`));
    } catch (err) {
      if ((err as Error).name === 'AbortError') return;
      this.swap(route, errorBanner(err, () => void this.renderSearch(query)));
    }
  }

  private async renderSimilar(docId: string): Promise<void> {
    const route: Route = { kind: 'similar', docId };
    const signal = this.beginRequest();
    this.swap(route, spinner());
    try {
      const resp = await this.api.similar(docId, 12, signal);
      const heading = document.createElement('h2');
      heading.textContent = 'visually similar products';
      this.swap(route, heading, resultsGrid(resp.items, this.nav, 'no similar items yet'));
    } catch (err) {
      if ((err as Error).name === 'AbortError') return;
      if (err instanceof ApiError && err.status === 409) {
        // crawl pipeline still embedding this product: show state and poll
        this.swap(route, pendingBanner('still processing this product’s images…'));
        this.pollTimer = setTimeout(() => void this.renderSimilar(docId), POLL_MS);
        return;
      }
      this.swap(route, errorBanner(err, () => void this.renderSimilar(docId)));
    }
  }

  private async renderImageQuery(): Promise<void> {
    const route: Route = { kind: 'image' };
    this.swap(
      route,
      uploadForm((file) => void this.runImageQuery(file)),
    );
  }

  private async runImageQuery(file: File): Promise<void> {
    const route: Route = { kind: 'image' };
    const signal = this.beginRequest();
    const preview = document.createElement('img');
    preview.className = 'query-preview';
    preview.alt = file.name;
    try {
      preview.src = URL.createObjectURL(file);
    } catch {
      /* no object URLs in the test DOM */
    }
    this.swap(route, preview, spinner());
    try {
      const resp = await this.api.imageSearch(file, file.name, 12, signal);
      this.swap(
        route,
        preview,
        resultsGrid(resp.items, this.nav, 'no matching products'),
      );
    } catch (err) {
      if ((err as Error).name === 'AbortError') return;
      this.swap(route, preview, errorBanner(err, () => void this.runImageQuery(file)));
    }
  }
}

export function boot(rootEl: HTMLElement, baseUrl = ''): App {
  const app = new App(rootEl, new ApiClient(baseUrl), new Router());
  app.start();
  return app;
}
