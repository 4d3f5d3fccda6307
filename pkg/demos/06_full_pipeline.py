"""The whole platform in one process: fixture shop -> crawl topology ->
message log -> analytics topology -> text + vector indices -> HTTP API.

Runs on a simulated clock (politeness waits cost nothing) with a small
untrained embedder; prints what each stage produced, then queries the
service endpoints in-process.
"""

import tempfile

from fastapi.testclient import TestClient

from snapforge.crawl import CrawlerScheduler, FixtureTransport
from snapforge.crawl.fixturegen import build_fixture_site, fixture_crawl_request, load_manifest
from snapforge.crawl.urls import doc_id_for
from snapforge.gan import GanConfig, init_params
from snapforge.messagelog import MessageLog
from snapforge.service import AppState, create_app
from snapforge.stream import RunConfig, SimulatedClock, StreamEngine
from snapforge.textindex import TextIndex
from snapforge.vectorindex import VectorCollection

SMALL = GanConfig(nz=16, image_size=16, image_channels=3,
                  gen_channels=(32, 16), disc_channels=(16, 32), dtype="float32")


def main():
    with tempfile.TemporaryDirectory() as root:
        manifest = build_fixture_site(root, products=16, rng_seed=0, duplicate_pair=(3, 9))
        clock = SimulatedClock()
        engine = StreamEngine(RunConfig(worker_slots=4, rng_seed=0), clock=clock)
        transport = FixtureTransport(root, clock=clock)
        text_index = TextIndex()
        log = MessageLog()
        scheduler = CrawlerScheduler(engine, text_index, log, transport)
        params = init_params(0, SMALL)
        collection = VectorCollection("items", SMALL.feature_dim)

        request_id = scheduler.register_crawl_request(fixture_crawl_request())
        scheduler.start_analytics(params, collection)
        print(f"registered {request_id}; running both topologies to quiescence ...")
        engine.run_until_idle()

        print(f"  indexed docs:    {text_index.count()} / {len(manifest)}")
        print(f"  image records:   {sum(log.end_offsets('image-urls'))}")
        print(f"  embeddings:      {len(collection)}")
        print(f"  simulated time:  {clock.monotonic():.2f}s of politeness waits")

        client = TestClient(create_app(AppState(
            text_index=text_index, collection=collection, scheduler=scheduler,
            engine=engine, message_log=log, embed_params=params,
        )))
        hits = client.get("/search", params={"q": "dress"}).json()["items"]
        print(f"\nGET /search?q=dress -> {len(hits)} hits; first: {hits[0]['name']!r}")

        dup = doc_id_for(manifest[3]["url"])
        partner = doc_id_for(manifest[9]["url"])
        similar = client.get(f"/items/{dup}/similar", params={"k": 3}).json()["items"]
        print(f"GET /items/{{dup}}/similar -> top: {similar[0]['doc_id']} "
              f"(distance {similar[0]['distance']:.2e}, partner is {partner})")
        status = client.get("/status").json()
        print(f"GET /status -> topologies: {sorted(status['topologies'])}")


if __name__ == "__main__":
    main()
