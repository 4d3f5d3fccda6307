/**
 * Hash router: every exploration state lives in the URL, so pivots are
 * back-navigable and shareable. Routes:
 *   #/search?q=…            text results
 *   #/item/:id/similar      visually-similar pivot
 *   #/image                 image-upload query
 */

export type Route =
  | { kind: 'search'; query: string }
  | { kind: 'similar'; docId: string }
  | { kind: 'image' };

export function parseHash(hash: string): Route {
  const clean = hash.startsWith('#') ? hash.slice(1) : hash;
  const [path, queryString] = clean.split('?', 2);
  const segments = path.split('/').filter(Boolean);
  if (segments[0] === 'item' && segments.length >= 3 && segments[2] === 'similar') {
    return { kind: 'similar', docId: decodeURIComponent(segments[1]) };
  }
  if (segments[0] === 'image') {
    return { kind: 'image' };
  }
  const params = new URLSearchParams(queryString ?? '');
  return { kind: 'search', query: params.get('q') ?? '' };
}

export function searchHash(query: string): string {
  return `#/search?${new URLSearchParams({ q: query })}`;
}

export class Router {
  private listeners: ((route: Route) => void)[] = [];

  constructor(private win: Window = window) {
    this.win.addEventListener('hashchange', () => this.emit());
  }

  current(): Route {
    return parseHash(this.win.location.hash);
  }

  navigate(hash: string): void {
    if (this.win.location.hash === hash) {
      this.emit(); // re-render in place
    } else {
      this.win.location.hash = hash; // triggers hashchange -> emit
    }
  }

  onChange(listener: (route: Route) => void): void {
    this.listeners.push(listener);
  }

  emit(): void {
    const route = this.current();
    for (const listener of this.listeners) listener(route);
  }
}
