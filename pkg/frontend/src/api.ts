/**
 * Typed client for the search service. Every call takes an AbortSignal so a
 * view can cancel its in-flight request on navigation.
 */

export interface ApiItem {
  doc_id: string;
  name: string | null;
  price: string | null;
  currency: string | null;
  brand: string | null;
  site_name: string | null;
  url: string | null;
  image_urls: string[];
  score?: number;
  distance?: number;
}

export interface SearchResponse {
  items: ApiItem[];
  query: string;
  count: number;
}

export interface SimilarResponse {
  items: ApiItem[];
  doc_id: string;
  count: number;
}

export interface ImageSearchResponse {
  items: ApiItem[];
  regions: number;
  count: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public errorCode: string,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      /* non-JSON error body */
    }
    if (!resp.ok) {
      const err = body as { error_code?: string; message?: string } | null;
      throw new ApiError(
        resp.status,
        err?.error_code ?? 'http_error',
        err?.message ?? `HTTP ${resp.status}`,
      );
    }
    return body as T;
  }

  search(query: string, opts?: { site?: string; limit?: number; signal?: AbortSignal }) {
    const params = new URLSearchParams({ q: query });
    if (opts?.site) params.set('site', opts.site);
    if (opts?.limit) params.set('limit', String(opts.limit));
    return this.request<SearchResponse>(`/search?${params}`, { signal: opts?.signal });
  }

  item(docId: string, signal?: AbortSignal) {
    return this.request<ApiItem>(`/items/${encodeURIComponent(docId)}`, { signal });
  }

  similar(docId: string, k = 12, signal?: AbortSignal) {
    return this.request<SimilarResponse>(
      `/items/${encodeURIComponent(docId)}/similar?k=${k}`,
      { signal },
    );
  }

  imageSearch(file: Blob, filename: string, k = 12, signal?: AbortSignal) {
    const form = new FormData();
    form.append('image', file, filename);
    return this.request<ImageSearchResponse>(`/search/image?k=${k}`, {
      method: 'POST',
      body: form,
      signal,
    });
  }
}
