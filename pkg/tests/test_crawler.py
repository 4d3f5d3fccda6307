"""Crawler: URLs, selectors, extraction, transports, and the full topology."""

import json
from decimal import Decimal

import pytest

from snapforge.crawl import (
    CrawlRequest,
    CrawlerScheduler,
    FixtureTransport,
    InvalidUrlError,
    RegistrationError,
    SelectorRule,
    canonicalize_url,
    discover_product_urls,
    doc_id_for,
    extract_field,
    parse_price,
    strip_noise,
    url_partition,
)
from snapforge.crawl.fixturegen import (
    DEFAULT_HOST,
    build_fixture_site,
    fixture_crawl_request,
    load_manifest,
)
from snapforge.crawl.transport import TransportError
from snapforge.messagelog import MessageLog
from snapforge.stream import RunConfig, SimulatedClock, StreamEngine, TopologyState
from snapforge.textindex import TextIndex


class TestCanonicalization:
    def test_case_port_fragment(self):
        host, canonical = url_partition("HTTPS://Shop.Example.com:443/p/1#x")
        assert host == "shop.example.com"
        assert canonical == "https://shop.example.com/p/1"

    def test_query_preserved(self):
        assert canonicalize_url("http://a.com/p/1?b=2") == "http://a.com/p/1?b=2"

    def test_non_default_port_kept(self):
        assert canonicalize_url("http://a.com:8080/x") == "http://a.com:8080/x"

    def test_empty_path_becomes_slash(self):
        assert canonicalize_url("http://a.com") == "http://a.com/"

    def test_invalid_rejected(self):
        for bad in ("not a url", "ftp://x/y", "//nohost", "http://"):
            with pytest.raises(InvalidUrlError):
                canonicalize_url(bad)

    def test_doc_id_stable(self):
        assert doc_id_for("HTTP://A.com/p/1#z") == doc_id_for("http://a.com/p/1")
        assert len(doc_id_for("http://a.com/p/1")) == 16


class TestDiscovery:
    def test_dedupe_filter_fragments(self):
        page = """<html><body>
            <a href="/p/1">one</a>
            <a href="/p/1#reviews">one again</a>
            <a href="/about">about</a>
        </body></html>"""
        urls = discover_product_urls(page, ["/p/*"], "https://host.example/")
        assert urls == ["https://host.example/p/1"]

    def test_relative_resolution(self):
        page = '<a href="../p/2">x</a>'
        urls = discover_product_urls(page, ["/p/*"], "https://h.example/cat/x")
        assert urls == ["https://h.example/p/2"]

    def test_regex_pattern(self):
        page = '<a href="/item-77/view">x</a><a href="/other">y</a>'
        urls = discover_product_urls(page, [r"re:/item-\d+/"], "https://h.example/")
        assert urls == ["https://h.example/item-77/view"]

    def test_unparseable_markup_empty(self):
        assert discover_product_urls(b"\x00\x01\x02", ["/p/*"], "https://h.example/") == []

    def test_fixture_listing_matches_manifest(self, tmp_path):
        manifest = build_fixture_site(str(tmp_path), products=12, rng_seed=3)
        transport = FixtureTransport(str(tmp_path))
        page = transport.fetch(f"https://{DEFAULT_HOST}/")
        urls = discover_product_urls(page.body, ["/p/*"], f"https://{DEFAULT_HOST}/")
        assert sorted(urls) == sorted(e["url"] for e in manifest)


class TestPriceParse:
    def test_persian_rial(self):
        assert parse_price("1,250,000 ریال") == (Decimal("1250000"), "IRR")

    def test_usd(self):
        assert parse_price("$49.99") == (Decimal("49.99"), "USD")

    def test_persian_digits(self):
        value, cur = parse_price("۱۲۳۴ تومان")
        assert value == Decimal("1234")
        assert cur == "IRR"

    def test_bare_number_no_currency(self):
        value, cur = parse_price("149.50")
        assert value == Decimal("149.50")
        assert cur is None

    def test_garbage_raises(self):
        from snapforge.crawl.rules import RuleError

        with pytest.raises(RuleError):
            parse_price("no digits here")


PRODUCT_PAGE = """<html><head><script>junk()</script></head><body>
  <h1 class="product-name">  Blue Denim Jacket </h1>
  <span class="price">1,250,000 ریال</span>
  <div class="brand">Modist</div>
  <div class="gallery">
    <img class="product-image" src="/img/a.png">
    <img class="product-image" src="/img/b.png">
  </div>
  <div class="related"><a class="related-link" href="/p/9.html">other</a></div>
</body></html>"""


class TestExtraction:
    def test_css_text_with_trim(self):
        rule = SelectorRule("name", "css-selector", "h1.product-name", ("trim",))
        assert extract_field(PRODUCT_PAGE, rule) == "Blue Denim Jacket"

    def test_currency_parse(self):
        rule = SelectorRule("price", "css-selector", "span.price", ("trim", "currency-parse"))
        assert extract_field(PRODUCT_PAGE, rule) == (Decimal("1250000"), "IRR")

    def test_list_field_absolute_urls(self):
        rule = SelectorRule(
            "image_urls", "css-selector", "img.product-image::attr(src)", ("absolute-url",)
        )
        urls = extract_field(PRODUCT_PAGE, rule, base_url="https://s.example/p/1.html")
        assert urls == ["https://s.example/img/a.png", "https://s.example/img/b.png"]

    def test_optional_missing_is_none(self):
        rule = SelectorRule("description", "css-selector", "p.description", ("trim",))
        assert extract_field(PRODUCT_PAGE, rule) is None

    def test_regex_strategy(self):
        rule = SelectorRule("name", "regex", r"<h1[^>]*>\s*(.*?)\s*</h1>")
        assert extract_field(PRODUCT_PAGE, rule) == "Blue Denim Jacket"

    def test_json_path_strategy(self):
        body = json.dumps({"product": {"name": "Silk Scarf", "images": ["u1", "u2"]}})
        name_rule = SelectorRule("name", "json-path", "product.name")
        imgs_rule = SelectorRule("image_urls", "json-path", "product.images")
        assert extract_field(body, name_rule) == "Silk Scarf"
        assert extract_field(body, imgs_rule) == ["u1", "u2"]

    def test_descendant_selector(self):
        rule = SelectorRule(
            "links", "css-selector", "div.related a.related-link::attr(href)", ("absolute-url",)
        )
        out = extract_field(PRODUCT_PAGE, rule, base_url="https://s.example/")
        assert out == ["https://s.example/p/9.html"]

    def test_invalid_selector_rejected(self):
        with pytest.raises(Exception):
            SelectorRule("name", "css-selector", "h1..[", ()).validate()

    def test_fixture_page_matches_manifest(self, tmp_path):
        manifest = build_fixture_site(str(tmp_path), products=6, rng_seed=5)
        transport = FixtureTransport(str(tmp_path))
        from snapforge.crawl.fixturegen import FIXTURE_RULES

        for entry in manifest[:3]:
            page = transport.fetch(entry["url"])
            body = strip_noise(page.body.decode("utf-8"))
            assert extract_field(body, FIXTURE_RULES["name"]) == entry["name"]
            price = extract_field(body, FIXTURE_RULES["price"])
            assert price == (Decimal(entry["price"]), entry["currency"])
            assert extract_field(body, FIXTURE_RULES["brand"]) == entry["brand"]
            assert extract_field(body, FIXTURE_RULES["description"]) == entry["description"]
            got_links = extract_field(body, FIXTURE_RULES["links"], base_url=entry["url"])
            assert got_links == entry["links"]
            got_imgs = extract_field(body, FIXTURE_RULES["image_urls"], base_url=entry["url"])
            assert got_imgs == entry["image_urls"]


class TestStripNoise:
    def test_scripts_styles_comments_removed(self):
        cleaned = strip_noise(PRODUCT_PAGE + "<!-- hidden --><style>a{}</style>")
        assert "junk()" not in cleaned
        assert "hidden" not in cleaned
        assert "a{}" not in cleaned
        assert "Blue Denim Jacket" in cleaned


class TestFixtureTransport:
    def test_serves_files_and_404(self, tmp_path):
        build_fixture_site(str(tmp_path), products=3, rng_seed=0)
        t = FixtureTransport(str(tmp_path))
        page = t.fetch(f"https://{DEFAULT_HOST}/p/000.html")
        assert page.status == 200 and b"product-name" in page.body
        with pytest.raises(TransportError) as exc:
            t.fetch(f"https://{DEFAULT_HOST}/p/999.html")
        assert exc.value.status == 404 and not exc.value.retryable

    def test_fetch_log_records_hosts(self, tmp_path):
        build_fixture_site(str(tmp_path), products=2, rng_seed=0)
        clock = SimulatedClock()
        t = FixtureTransport(str(tmp_path), clock=clock)
        t.fetch(f"https://{DEFAULT_HOST}/")
        clock.advance(0.5)
        t.fetch(f"https://{DEFAULT_HOST}/p/000.html")
        gaps = t.gaps_by_host()
        assert gaps[DEFAULT_HOST] == [pytest.approx(0.5)]


def crawl_fixture(tmp_path, products=12, politeness_ms=50, duplicate_pair=(3, 7)):
    """Register and fully run a fixture crawl on a simulated clock."""
    build_fixture_site(str(tmp_path), products=products, rng_seed=1,
                       duplicate_pair=duplicate_pair)
    clock = SimulatedClock()
    engine = StreamEngine(RunConfig(worker_slots=4, rng_seed=7), clock=clock, track_trees=True)
    transport = FixtureTransport(str(tmp_path), clock=clock)
    text_index = TextIndex()
    log = MessageLog()
    scheduler = CrawlerScheduler(engine, text_index, log, transport)
    request = fixture_crawl_request(politeness_delay_ms=politeness_ms)
    request_id = scheduler.register_crawl_request(request)
    engine.run_until_idle()
    return {
        "engine": engine,
        "transport": transport,
        "text_index": text_index,
        "log": log,
        "scheduler": scheduler,
        "request_id": request_id,
        "clock": clock,
        "manifest": load_manifest(str(tmp_path)),
    }


@pytest.fixture(scope="module")
def crawl(tmp_path_factory):
    return crawl_fixture(tmp_path_factory.mktemp("fixture"))


class TestCrawlPipeline:

    def test_all_products_indexed(self, crawl):
        assert crawl["text_index"].count() == len(crawl["manifest"])

    def test_indexed_fields_match_manifest(self, crawl):
        for entry in crawl["manifest"]:
            doc = crawl["text_index"].get(doc_id_for(entry["url"]))
            assert doc is not None, entry["url"]
            assert doc["name"] == entry["name"]
            assert doc["price"] == entry["price"]
            assert doc["currency"] == entry["currency"]
            assert doc["brand"] == entry["brand"]
            assert doc["image_urls"] == entry["image_urls"]
            assert not doc["incomplete"]

    def test_published_image_records_match_manifest(self, crawl):
        expected = sum(len(e["image_urls"]) for e in crawl["manifest"])
        assert sum(crawl["log"].end_offsets("image-urls")) == expected

    def test_images_of_one_product_share_partition(self, crawl):
        by_doc = {}
        for rec in crawl["log"].poll("inspector", "image-urls", 10_000):
            payload = json.loads(rec.payload)
            by_doc.setdefault(payload["doc_id"], set()).add(rec.partition)
        assert by_doc and all(len(parts) == 1 for parts in by_doc.values())

    def test_frontier_conservation(self, crawl):
        counts = crawl["scheduler"].stores_by_id[crawl["request_id"]].counts()
        assert counts["pending"] == 0
        assert counts["fetched"] + counts["failed"] == counts["total"]
        assert counts["fetched"] == len(crawl["manifest"])

    def test_politeness_gaps(self, crawl):
        gaps = crawl["transport"].gaps_by_host()
        for host, host_gaps in gaps.items():
            for gap in host_gaps:
                assert gap >= 0.05 - 1e-9, f"gap {gap} under politeness delay for {host}"

    def test_roots_all_settled(self, crawl):
        handle = crawl["scheduler"].handles[crawl["request_id"]]
        roots = handle.metrics()["_roots"]
        assert roots["pending"] == 0
        assert roots["emitted"] == roots["acked"] + roots["failed"]

    def test_search_finds_products(self, crawl):
        hits = crawl["text_index"].search("dress", limit=50)
        expected = [e for e in crawl["manifest"] if "dress" in e["name"].lower()]
        assert len(hits) >= len(expected) > 0


class TestCrawlIdempotence:
    def test_rerun_yields_identical_docs(self, tmp_path):
        runs = []
        for sub in ("a", "b"):
            d = tmp_path / sub
            d.mkdir()
            result = crawl_fixture(d, products=8)
            docs = {}
            for doc_id in result["text_index"].all_doc_ids():
                doc = result["text_index"].get(doc_id)
                doc.pop("crawl_time")
                docs[doc_id] = doc
            runs.append(docs)
        assert runs[0] == runs[1]


class TestRegistration:
    def setup_scheduler(self, tmp_path, products=4):
        build_fixture_site(str(tmp_path), products=products, rng_seed=1)
        clock = SimulatedClock()
        engine = StreamEngine(RunConfig(worker_slots=2), clock=clock)
        transport = FixtureTransport(str(tmp_path), clock=clock)
        return CrawlerScheduler(engine, TextIndex(), MessageLog(), transport), engine

    def test_seed_expansion_counts(self, tmp_path):
        scheduler, _ = self.setup_scheduler(tmp_path, products=4)
        rid = scheduler.register_crawl_request(fixture_crawl_request())
        assert scheduler.stores_by_id[rid].counts()["pending"] == 4

    def test_empty_seeds_rejected(self, tmp_path):
        scheduler, _ = self.setup_scheduler(tmp_path)
        req = fixture_crawl_request()
        req.seed_urls = []
        with pytest.raises(RegistrationError):
            scheduler.register_crawl_request(req)

    def test_missing_required_rule_rejected(self, tmp_path):
        scheduler, _ = self.setup_scheduler(tmp_path)
        req = fixture_crawl_request()
        del req.extraction_rules["price"]
        with pytest.raises(RegistrationError):
            scheduler.register_crawl_request(req)

    def test_duplicate_active_site_rejected(self, tmp_path):
        scheduler, _ = self.setup_scheduler(tmp_path)
        scheduler.register_crawl_request(fixture_crawl_request())
        with pytest.raises(RegistrationError):
            scheduler.register_crawl_request(fixture_crawl_request())

    def test_cancel_then_reregister(self, tmp_path):
        scheduler, engine = self.setup_scheduler(tmp_path)
        rid = scheduler.register_crawl_request(fixture_crawl_request())
        scheduler.cancel(rid)
        assert scheduler.handles[rid].state is TopologyState.KILLED
        scheduler.register_crawl_request(fixture_crawl_request())

    def test_max_pages_cap(self, tmp_path):
        scheduler, _ = self.setup_scheduler(tmp_path, products=4)
        req = fixture_crawl_request(max_pages=2)
        rid = scheduler.register_crawl_request(req)
        assert scheduler.stores_by_id[rid].counts()["total"] == 2
