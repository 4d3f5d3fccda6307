/** Presentation helpers. Numbers shown to the user come verbatim from API
 * payloads; the similarity percentage is display sugar derived from the raw
 * distance, which stays available in the tooltip. */

/** Squared euclidean distance on unit vectors -> cosine similarity. */
export function similarityFromDistance(distance: number): number {
  return 1 - distance / 2;
}

export function similarityLabel(distance: number): string {
  return `${(100 * similarityFromDistance(distance)).toFixed(1)}% similar`;
}

export function priceLabel(price: string | null, currency: string | null): string {
  if (price === null) return 'price unknown';
  return currency ? `${price} ${currency}` : price;
}
