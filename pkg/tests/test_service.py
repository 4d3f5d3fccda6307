"""Service API over a fully crawled + embedded fixture stack."""

import json

import pytest
from fastapi.testclient import TestClient

from snapforge.crawl import CrawlerScheduler, FixtureTransport
from snapforge.crawl.fixturegen import (
    DEFAULT_HOST,
    build_fixture_site,
    fixture_crawl_request,
    load_manifest,
)
from snapforge.crawl.urls import doc_id_for
from snapforge.gan import GanConfig, init_params
from snapforge.messagelog import MessageLog
from snapforge.service import AppState, create_app
from snapforge.stream import RunConfig, SimulatedClock, StreamEngine
from snapforge.textindex import TextIndex
from snapforge.vectorindex import VectorCollection

SMALL = GanConfig(
    nz=12, image_size=8, image_channels=3, gen_channels=(16, 8), disc_channels=(8, 16),
    dtype="float32",
)


@pytest.fixture(scope="module")
def stack(tmp_path_factory):
    root = tmp_path_factory.mktemp("site")
    build_fixture_site(str(root), products=10, rng_seed=4, duplicate_pair=(2, 6))
    clock = SimulatedClock()
    engine = StreamEngine(RunConfig(worker_slots=4, rng_seed=5), clock=clock)
    transport = FixtureTransport(str(root), clock=clock)
    text_index = TextIndex()
    log = MessageLog()
    scheduler = CrawlerScheduler(engine, text_index, log, transport)
    params = init_params(13, SMALL)
    collection = VectorCollection("items", SMALL.feature_dim)
    scheduler.register_crawl_request(fixture_crawl_request(politeness_delay_ms=10))
    scheduler.start_analytics(params, collection, politeness_delay_ms=10)
    engine.run_until_idle()
    state = AppState(
        text_index=text_index,
        collection=collection,
        scheduler=scheduler,
        engine=engine,
        message_log=log,
        embed_params=params,
    )
    return {
        "client": TestClient(create_app(state)),
        "manifest": load_manifest(str(root)),
        "root": root,
        "engine": engine,
    }


class TestSearch:
    def test_text_search_hits_manifest(self, stack):
        resp = stack["client"].get("/search", params={"q": "dress"})
        assert resp.status_code == 200
        items = resp.json()["items"]
        expected = {
            doc_id_for(e["url"]) for e in stack["manifest"] if "dress" in e["name"].lower()
        }
        assert expected <= {it["doc_id"] for it in items}
        for it in items:
            assert it["price"] is not None and it["currency"] in ("USD", "IRR")

    def test_empty_query_400(self, stack):
        resp = stack["client"].get("/search", params={"q": " "})
        assert resp.status_code == 400
        assert resp.json()["error_code"] == "empty_query"

    def test_unknown_site_400(self, stack):
        resp = stack["client"].get("/search", params={"q": "dress", "site": "nope.example"})
        assert resp.status_code == 400

    def test_site_filter(self, stack):
        resp = stack["client"].get("/search", params={"q": "dress", "site": DEFAULT_HOST})
        assert resp.status_code == 200
        assert all(it["site_name"] == DEFAULT_HOST for it in resp.json()["items"])

    def test_limit_bounds(self, stack):
        assert stack["client"].get("/search", params={"q": "a", "limit": 0}).status_code == 400
        assert stack["client"].get("/search", params={"q": "a", "limit": 101}).status_code == 400

    def test_limit_preserves_prefix(self, stack):
        full = stack["client"].get("/search", params={"q": "dress", "limit": 10}).json()["items"]
        short = stack["client"].get("/search", params={"q": "dress", "limit": 2}).json()["items"]
        assert [i["doc_id"] for i in short] == [i["doc_id"] for i in full][: len(short)]


class TestItems:
    def test_get_item(self, stack):
        entry = stack["manifest"][0]
        doc_id = doc_id_for(entry["url"])
        resp = stack["client"].get(f"/items/{doc_id}")
        assert resp.status_code == 200
        body = resp.json()
        assert body["name"] == entry["name"]
        assert body["image_urls"] == entry["image_urls"]

    def test_unknown_404(self, stack):
        resp = stack["client"].get("/items/doesnotexist")
        assert resp.status_code == 404


class TestSimilar:
    def test_duplicate_partner_rank_one(self, stack):
        a = doc_id_for(stack["manifest"][2]["url"])
        b = doc_id_for(stack["manifest"][6]["url"])
        for src, partner in ((a, b), (b, a)):
            resp = stack["client"].get(f"/items/{src}/similar", params={"k": 3})
            assert resp.status_code == 200
            items = resp.json()["items"]
            assert items[0]["doc_id"] == partner
            assert items[0]["distance"] <= 1e-5

    def test_k_zero_400(self, stack):
        doc_id = doc_id_for(stack["manifest"][0]["url"])
        assert stack["client"].get(f"/items/{doc_id}/similar", params={"k": 0}).status_code == 400

    def test_unknown_doc_404(self, stack):
        assert stack["client"].get("/items/ghost/similar").status_code == 404

    def test_unembedded_409(self, stack):
        stack["engine"]  # stack built; inject a doc with no embeddings
        client = stack["client"]
        state = client.app.state.snapforge
        state.text_index.upsert({"doc_id": "textonly", "name": "phantom dress",
                                 "site_name": DEFAULT_HOST})
        state.text_index.commit()
        resp = client.get("/items/textonly/similar")
        assert resp.status_code == 409

    def test_excludes_self(self, stack):
        doc_id = doc_id_for(stack["manifest"][0]["url"])
        resp = stack["client"].get(f"/items/{doc_id}/similar", params={"k": 8})
        assert all(it["doc_id"] != doc_id for it in resp.json()["items"])


class TestImageSearch:
    def gallery_image(self, stack, index=0):
        entry = stack["manifest"][index]
        rel = entry["image_urls"][0].split(f"{DEFAULT_HOST}/")[1]
        return (stack["root"] / DEFAULT_HOST / rel).read_bytes(), doc_id_for(entry["url"])

    def test_exact_gallery_image_rank_one(self, stack):
        raw, doc_id = self.gallery_image(stack, index=1)
        resp = stack["client"].post(
            "/search/image",
            params={"k": 5},
            files={"image": ("query.png", raw, "image/png")},
        )
        assert resp.status_code == 200
        items = resp.json()["items"]
        assert items[0]["doc_id"] == doc_id
        assert items[0]["distance"] <= 1e-5

    def test_text_file_400(self, stack):
        resp = stack["client"].post(
            "/search/image",
            files={"image": ("note.txt", b"hello world", "text/plain")},
        )
        assert resp.status_code == 400

    def test_oversize_413(self, stack):
        resp = stack["client"].post(
            "/search/image",
            files={"image": ("big.png", b"\x00" * (10 * 1024 * 1024 + 1), "image/png")},
        )
        assert resp.status_code == 413

    def test_raw_body_also_accepted(self, stack):
        raw, doc_id = self.gallery_image(stack, index=3)
        resp = stack["client"].post(
            "/search/image", content=raw, headers={"Content-Type": "image/png"}
        )
        assert resp.status_code == 200
        assert resp.json()["items"][0]["doc_id"] == doc_id


class TestStatus:
    def test_counts(self, stack):
        resp = stack["client"].get("/status")
        assert resp.status_code == 200
        body = resp.json()
        assert body["indexed_docs"] >= len(stack["manifest"])
        assert body["embeddings"] == sum(len(e["image_urls"]) for e in stack["manifest"])
        assert sum(body["topics"]["image-urls"]) == body["embeddings"]
        assert any(name.startswith("crawler-") for name in body["topologies"])
        assert "image-analytics" in body["topologies"]


class TestCrawlRegistration:
    def test_invalid_schema_400(self, stack):
        resp = stack["client"].post("/crawl-requests", content=json.dumps({"nope": 1}))
        assert resp.status_code == 400

    def test_missing_seeds_400(self, stack):
        req = fixture_crawl_request()
        payload = {
            "site_name": "empty.example",
            "seed_urls": [],
            "extraction_rules": {
                k: {"field": v.field, "strategy": v.strategy, "pattern": v.pattern,
                    "post_process": list(v.post_process)}
                for k, v in req.extraction_rules.items()
            },
        }
        resp = stack["client"].post("/crawl-requests", content=json.dumps(payload))
        assert resp.status_code == 400

    def test_duplicate_site_409(self, stack):
        req = fixture_crawl_request()
        payload = {
            "site_name": req.site_name,
            "seed_urls": req.seed_urls,
            "url_include_patterns": req.url_include_patterns,
            "politeness_delay_ms": 10,
            "extraction_rules": {
                k: {"field": v.field, "strategy": v.strategy, "pattern": v.pattern,
                    "post_process": list(v.post_process)}
                for k, v in req.extraction_rules.items()
            },
        }
        resp = stack["client"].post("/crawl-requests", content=json.dumps(payload))
        assert resp.status_code == 409
