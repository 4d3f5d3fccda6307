import { describe, expect, it } from 'vitest';

import { priceLabel, similarityFromDistance, similarityLabel } from '../src/format.js';

describe('similarityFromDistance', () => {
  it('maps distance 0 to similarity 1', () => {
    expect(similarityFromDistance(0)).toBe(1);
  });

  it('maps orthogonal unit vectors (d^2 = 2) to similarity 0', () => {
    expect(similarityFromDistance(2)).toBe(0);
  });

  it('maps opposite unit vectors (d^2 = 4) to similarity -1', () => {
    expect(similarityFromDistance(4)).toBe(-1);
  });

  it('renders a percentage label', () => {
    expect(similarityLabel(0.5)).toBe('75.0% similar');
  });
});

describe('priceLabel', () => {
  it('joins price and currency verbatim', () => {
    expect(priceLabel('1250000', 'IRR')).toBe('1250000 IRR');
  });

  it('handles missing currency', () => {
    expect(priceLabel('49.99', null)).toBe('49.99');
  });

  it('handles missing price', () => {
    expect(priceLabel(null, 'USD')).toBe('price unknown');
  });
});
