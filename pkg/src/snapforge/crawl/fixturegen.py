"""Deterministic fixture shop: listing page, product pages, glyph images.

Layout written under <root>/<site_host>/:
    index.html       listing page linking every product (plus noise links)
    p/NNN.html       product pages with structured extraction markup
    img/*.png        product images (garment glyphs)
    manifest.json    ground truth: [{url, file, name, price, currency,
                     brand, description, links, image_urls}]

Two products are intentional visual duplicates: byte-identical images under
different URLs, so their embeddings coincide and each should retrieve the
other at distance ~0.
"""

from __future__ import annotations

import json
import os
import shutil

import numpy as np

from snapforge.crawl.types import CrawlRequest, SelectorRule
from snapforge.gan.corpus import CLASS_NAMES, render_glyph

DEFAULT_HOST = "glyphshop.example"
BRANDS = ("GlyphWear", "Silhouette & Co", "Modist", "پوشاک مهتاب")
ADJECTIVES = ("Crimson", "Azure", "Golden", "Velvet", "Linen", "Midnight", "Pastel", "Silk")
NOUN_BY_CLASS = {
    "dress": "Dress",
    "tshirt": "Shirt",
    "pants": "Pants",
    "skirt": "Skirt",
    "coat": "Coat",
    "hat": "Hat",
    "bag": "Bag",
    "boot": "Boots",
}

FIXTURE_RULES = {
    "name": SelectorRule("name", "css-selector", "h1.product-name", ("trim",)),
    "price": SelectorRule("price", "css-selector", "span.price", ("trim", "currency-parse")),
    "brand": SelectorRule("brand", "css-selector", "div.brand", ("trim",)),
    "description": SelectorRule("description", "css-selector", "p.description", ("trim",)),
    "links": SelectorRule("links", "css-selector", "a.related-link::attr(href)", ("absolute-url",)),
    "image_urls": SelectorRule(
        "image_urls", "css-selector", "img.product-image::attr(src)", ("absolute-url",)
    ),
}


def fixture_crawl_request(
    site_host: str = DEFAULT_HOST, politeness_delay_ms: int = 50, max_pages: int = 200
) -> CrawlRequest:
    return CrawlRequest(
        site_name=site_host,
        seed_urls=[f"https://{site_host}/"],
        url_include_patterns=["/p/*"],
        extraction_rules=dict(FIXTURE_RULES),
        politeness_delay_ms=politeness_delay_ms,
        max_pages=max_pages,
    )


def _product_page(name, price_text, brand, description, related, image_paths):
    images = "\n".join(
        f'    <img class="product-image" src="{src}" alt="product photo">'
        for src in image_paths
    )
    links = "\n".join(
        f'    <a class="related-link" href="{href}">related item</a>' for href in related
    )
    return f"""<!DOCTYPE html>
<html>
<head>
  <title>{name}</title>
  <script>window.__tracking = {{"id": 1}};</script>
  <style>.price {{ font-weight: bold; }}</style>
</head>
<body>
  <!-- product detail -->
  <h1 class="product-name">  {name}  </h1>
  <span class="price">{price_text}</span>
  <div class="brand">{brand}</div>
  <p class="description">{description}</p>
  <div class="gallery">
{images}
  </div>
  <div class="related">
{links}
  </div>
</body>
</html>
"""


def build_fixture_site(
    root: str,
    site_host: str = DEFAULT_HOST,
    products: int = 50,
    rng_seed: int = 0,
    duplicate_pair: tuple[int, int] = (7, 23),
) -> list[dict]:
    """Write the fixture site; returns (and writes) the manifest."""
    rng = np.random.default_rng(rng_seed)
    site_dir = os.path.join(root, site_host)
    os.makedirs(os.path.join(site_dir, "p"), exist_ok=True)
    os.makedirs(os.path.join(site_dir, "img"), exist_ok=True)

    manifest: list[dict] = []
    dup_a, dup_b = duplicate_pair
    for i in range(products):
        cls = CLASS_NAMES[i % len(CLASS_NAMES)]
        adjective = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
        name = f"{adjective} {NOUN_BY_CLASS[cls]} No. {i}"
        brand = BRANDS[i % len(BRANDS)]
        if i % 2 == 0:
            value = f"{float(rng.integers(15, 400)) + 0.99:.2f}"
            price_text, price_value, currency = f"${value}", value, "USD"
        else:
            rial = int(rng.integers(500, 9000)) * 1000
            price_text, price_value, currency = f"{rial:,} ریال", str(rial), "IRR"
        description = (
            f"A {adjective.lower()} {NOUN_BY_CLASS[cls].lower()} from {brand}. "
            f"Soft, everyday {cls} silhouette for the season."
        )

        if i == dup_b:
            n_images = 1
            image_files = [f"img/p{i:03d}_0.png"]
            src = os.path.join(site_dir, f"img/p{dup_a:03d}_0.png")
            shutil.copyfile(src, os.path.join(site_dir, image_files[0]))
        else:
            n_images = 1 if i == dup_a else int(rng.integers(2, 4))
            image_files = []
            for k in range(n_images):
                img = render_glyph(cls, rng, size=64)
                fname = f"img/p{i:03d}_{k}.png"
                img.save(os.path.join(site_dir, fname), format="PNG")
                image_files.append(fname)

        related = [f"/p/{(i + 1) % products:03d}.html", f"/p/{(i + 3) % products:03d}.html"]
        page = _product_page(
            name, price_text, brand, description, related, [f"/{f}" for f in image_files]
        )
        with open(os.path.join(site_dir, f"p/{i:03d}.html"), "w", encoding="utf-8") as f:
            f.write(page)
        manifest.append(
            {
                "url": f"https://{site_host}/p/{i:03d}.html",
                "file": f"p/{i:03d}.html",
                "name": name,
                "price": price_value,
                "currency": currency,
                "brand": brand,
                "description": description,
                "links": [f"https://{site_host}{r}" for r in related],
                "image_urls": [f"https://{site_host}/{f}" for f in image_files],
            }
        )

    anchors = []
    for i, entry in enumerate(manifest):
        suffix = "#reviews" if i % 10 == 3 else ""
        anchors.append(f'  <a href="/p/{i:03d}.html{suffix}">{entry["name"]}</a>')
    anchors.append('  <a href="/about.html">about us</a>')
    anchors.append('  <a href="https://elsewhere.example/promo">partner promo</a>')
    listing = "<!DOCTYPE html>\n<html><body>\n" + "\n".join(anchors) + "\n</body></html>\n"
    with open(os.path.join(site_dir, "index.html"), "w", encoding="utf-8") as f:
        f.write(listing)
    with open(os.path.join(site_dir, "about.html"), "w", encoding="utf-8") as f:
        f.write("<html><body><p>We sell glyphs.</p></body></html>")
    with open(os.path.join(site_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=1)
    return manifest


def load_manifest(root: str, site_host: str = DEFAULT_HOST) -> list[dict]:
    with open(os.path.join(root, site_host, "manifest.json"), encoding="utf-8") as f:
        return json.load(f)
