"""Index product records and search them with BM25 field weighting.

Upserts are invisible until commit; name matches outweigh description
matches (3:1 by default); filters narrow by exact site/brand/currency.
"""

from snapforge.textindex import TextIndex


def main():
    idx = TextIndex()
    docs = [
        {"doc_id": "d1", "name": "red silk dress", "brand": "Modist",
         "description": "an evening dress in silk", "site_name": "shopA"},
        {"doc_id": "d2", "name": "denim jacket", "brand": "GlyphWear",
         "description": "casual jacket, red stitching", "site_name": "shopA"},
        {"doc_id": "d3", "name": "red scarf", "brand": "Modist",
         "description": "wool scarf", "site_name": "shopB"},
        {"doc_id": "d4", "name": "کت جین آبی", "brand": "پوشاک مهتاب",
         "description": "blue denim coat", "site_name": "shopB"},
    ]
    for doc in docs:
        idx.upsert(doc)
    print("before commit, search 'red' finds:", idx.search("red"))
    generation = idx.commit()
    print(f"committed generation {generation}\n")

    for query in ("red", "dress", "denim", "کت"):
        hits = idx.search(query, limit=5)
        shown = [(doc_id, round(score, 3)) for doc_id, score in hits]
        print(f"search {query!r:12} -> {shown}")

    print("\nfiltered to shopB:", idx.search("red", filters={"site_name": "shopB"}))

    idx.upsert({"doc_id": "d3", "name": "red cashmere scarf", "brand": "Modist",
                "description": "upgraded", "site_name": "shopB"})
    idx.commit()
    print("after re-crawl upsert, d3 is:", idx.get("d3")["name"])


if __name__ == "__main__":
    main()
