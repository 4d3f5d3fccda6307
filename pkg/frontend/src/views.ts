/**
 * DOM builders for the three views: search results, similar-items pivot,
 * and image-upload query. Views never mutate server state; all rendering is
 * from API payloads, in API order.
 */

import { ApiError, ApiItem } from './api.js';
import { priceLabel, similarityLabel } from './format.js';

export interface ViewItem extends ApiItem {
  selected?: boolean;
  loading?: boolean;
}

export type Navigate = (hash: string) => void;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function productCard(item: ViewItem, navigate: Navigate): HTMLElement {
  const card = el('div', 'card');
  card.dataset.docId = item.doc_id;
  const thumb = el('img', 'thumb') as HTMLImageElement;
  thumb.alt = item.name ?? item.doc_id;
  if (item.image_urls.length) thumb.src = item.image_urls[0];
  card.appendChild(thumb);
  card.appendChild(el('div', 'name', item.name ?? '(unnamed)'));
  card.appendChild(el('div', 'price', priceLabel(item.price, item.currency)));
  if (item.brand) card.appendChild(el('div', 'brand', item.brand));
  if (item.site_name) card.appendChild(el('div', 'site', item.site_name));
  if (item.distance !== undefined) {
    const sim = el('div', 'similarity', similarityLabel(item.distance));
    sim.title = `raw distance ${item.distance}`;
    card.appendChild(sim);
  }
  card.addEventListener('click', () => {
    navigate(`#/item/${encodeURIComponent(item.doc_id)}/similar`);
  });
  return card;
}

export function resultsGrid(items: ViewItem[], navigate: Navigate, emptyMessage: string): HTMLElement {
  const grid = el('div', 'grid');
  if (!items.length) {
    grid.appendChild(el('p', 'empty-state', emptyMessage));
    return grid;
  }
  for (const item of items) grid.appendChild(productCard(item, navigate));
  return grid;
}

export function errorBanner(error: unknown, retry: () => void): HTMLElement {
  const banner = el('div', 'error-banner');
  const message =
    error instanceof ApiError ? `${error.errorCode}: ${error.message}` : String(error);
  banner.appendChild(el('span', 'error-text', message));
  const button = el('button', 'retry', 'retry');
  button.addEventListener('click', retry);
  banner.appendChild(button);
  return banner;
}

export function pendingBanner(text: string): HTMLElement {
  return el('div', 'pending-banner', text);
}

export function spinner(): HTMLElement {
  return el('div', 'spinner', 'loading…');
}

export function searchForm(initial: string, onSubmit: (q: string) => void): HTMLElement {
  const form = el('form', 'search-form');
  const input = el('input', 'search-input') as HTMLInputElement;
  input.type = 'search';
  input.placeholder = 'search products…';
  input.value = initial;
  const button = el('button', 'search-submit', 'search');
  button.type = 'submit';
  form.append(input, button);
  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    const q = input.value.trim();
    if (q) onSubmit(q); // empty input: validation only, no request
  });
  return form;
}

export function uploadForm(onFile: (file: File) => void): HTMLElement {
  const wrap = el('div', 'upload-form');
  const input = el('input', 'upload-input') as HTMLInputElement;
  input.type = 'file';
  input.accept = 'image/*';
  const note = el('p', 'upload-note', 'upload a product photo to find similar items');
  wrap.append(note, input);
  input.addEventListener('change', () => {
    const file = input.files?.[0];
    if (!file) return;
    if (!file.type.startsWith('image/')) {
      wrap.appendChild(el('p', 'client-error', 'that is not an image file'));
      return;
    }
    if (file.size > 10 * 1024 * 1024) {
      wrap.appendChild(el('p', 'client-error', 'image exceeds the 10 MB limit'));
      return;
    }
    onFile(file);
  });
  return wrap;
}
