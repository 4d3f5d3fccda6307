"""snapforge command line.

Subcommands:
    gen-corpus      write a synthetic garment-glyph training corpus
    gen-fixture     write a fixture shop site (pages + images + manifest)
    train-embedder  train the DCGAN and save the model file
    index           embed a labeled image corpus into a vector collection
    eval            run the retrieval benchmark (+ raw-pixel baseline)
    crawl           register a crawl request and run it to quiescence
    serve           run the HTTP service

SNAPFORGE_CONFIG may point at a JSON (or TOML, python >= 3.11) file whose
keys provide defaults for any long flag, e.g. {"workers": 4, "port": 8080};
explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _load_config_defaults() -> dict:
    path = os.environ.get("SNAPFORGE_CONFIG")
    if not path:
        return {}
    with open(path, "rb") as f:
        if path.endswith(".toml"):
            try:
                import tomllib  # python >= 3.11
            except ImportError as e:
                raise SystemExit("TOML config needs python >= 3.11; use JSON") from e
            return tomllib.load(f)
        return json.load(f)


def _apply_config(parser: argparse.ArgumentParser, config: dict) -> None:
    known = {a.dest for a in parser._actions}
    parser.set_defaults(**{k.replace("-", "_"): v for k, v in config.items()
                           if k.replace("-", "_") in known})


def cmd_gen_corpus(args) -> int:
    from snapforge.gan.corpus import generate_corpus

    items = generate_corpus(args.out, classes=args.classes, per_class=args.per_class,
                            rng_seed=args.seed)
    print(f"wrote {len(items)} images under {args.out}")
    return 0


def cmd_gen_fixture(args) -> int:
    from snapforge.crawl.fixturegen import build_fixture_site

    manifest = build_fixture_site(args.out, products=args.products, rng_seed=args.seed)
    images = sum(len(e["image_urls"]) for e in manifest)
    print(f"wrote fixture site with {len(manifest)} products / {images} images under {args.out}")
    return 0


def cmd_train_embedder(args) -> int:
    from snapforge.gan.network import GanConfig, init_params, save_params
    from snapforge.gan.train import load_image_dir, train_model

    config = GanConfig()
    params = init_params(args.seed, config)
    images, _ = load_image_dir(args.corpus, config)
    print(f"training on {images.shape[0]} images for {args.epochs} epochs "
          f"(batch {args.batch}, lr {args.lr})")
    trainer = train_model(params, images, epochs=args.epochs, batch_size=args.batch,
                          lr=args.lr, rng_seed=args.seed, log_every=args.log_every)
    save_params(params, args.out)
    last = trainer.history[-1].report
    print(f"saved {args.out}; final V={last.v_value:+.4f} "
          f"D(x)={last.d_real_mean:.3f} D(G(z))={last.d_fake_mean:.3f}")
    return 0


def cmd_index(args) -> int:
    from PIL import Image

    from snapforge.gan.corpus import list_corpus
    from snapforge.gan.embed import DcganEmbedder
    from snapforge.gan.network import load_params
    from snapforge.vectorindex import EmbeddingEntry, VectorCollection

    params = load_params(args.model)
    embedder = DcganEmbedder(params, model_path=args.model)
    items = list_corpus(args.corpus)
    coll = VectorCollection("items", embedder.dim)
    for start in range(0, len(items), 64):
        chunk = items[start : start + 64]
        imgs = [Image.open(it.path).convert("RGB") for it in chunk]
        for item, vec in zip(chunk, embedder.embed_batch(imgs)):
            coll.insert(EmbeddingEntry(item.item_id, item.item_id, 0, vec, item.class_label))
    coll.save(args.collection)
    print(f"indexed {len(coll)} embeddings into {args.collection}")
    return 0


def cmd_eval(args) -> int:
    from snapforge.evalharness import report_table, run_benchmark, split
    from snapforge.gan.corpus import list_corpus
    from snapforge.gan.embed import DcganEmbedder, PixelEmbedder
    from snapforge.gan.network import load_params

    items = list_corpus(args.corpus)
    queries, gallery = split(items, args.split, rng_seed=args.seed)
    k_list = tuple(int(k) for k in args.k.split(","))
    params = load_params(args.model)
    reports = [run_benchmark(DcganEmbedder(params, model_path=args.model),
                             queries, gallery, k_list)]
    if args.baseline == "pixels":
        dim = params.config.feature_dim
        reports.append(run_benchmark(PixelEmbedder(dim=dim), queries, gallery, k_list))
    table, blob = report_table(reports)
    print(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(blob)
        print(f"wrote {args.out}")
    return 0


def _engine(args):
    from snapforge.stream import RunConfig, StreamEngine

    return StreamEngine(
        RunConfig(
            worker_slots=args.workers,
            tuple_timeout_secs=args.tuple_timeout,
            rng_seed=args.seed,
        )
    )


def cmd_crawl(args) -> int:
    from snapforge.crawl import CrawlRequest, CrawlerScheduler, FixtureTransport, HttpTransport
    from snapforge.messagelog import MessageLog
    from snapforge.textindex import TextIndex

    with open(args.request, encoding="utf-8") as f:
        request = CrawlRequest.from_dict(json.load(f))
    if not args.live and not args.corpus:
        raise SystemExit("pass --corpus DIR for fixture crawling or --live")
    transport = HttpTransport() if args.live else FixtureTransport(args.corpus)
    engine = _engine(args)
    journal = os.path.join(args.index_dir, "products.jsonl") if args.index_dir else None
    text_index = TextIndex(journal_path=journal)
    log = MessageLog()
    scheduler = CrawlerScheduler(engine, text_index, log, transport,
                                 index_dir=args.index_dir)
    request_id = scheduler.register_crawl_request(request)
    print(f"registered {request_id}; crawling ...")
    engine.run_until_idle()
    status = scheduler.status()[request_id]
    print(f"frontier: {status['frontier']}")
    print(f"indexed docs: {text_index.count()}")
    print(f"image-url records: {sum(log.end_offsets(scheduler.topic))}")
    if args.log_dir:
        log.snapshot(args.log_dir)
        print(f"message-log snapshot in {args.log_dir}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from snapforge.crawl import CrawlerScheduler, FixtureTransport, HttpTransport
    from snapforge.gan.network import load_params
    from snapforge.messagelog import MessageLog
    from snapforge.service import AppState, create_app
    from snapforge.textindex import TextIndex
    from snapforge.vectorindex import VectorCollection

    transport = HttpTransport() if args.live else FixtureTransport(args.corpus or ".")
    engine = _engine(args)
    journal = os.path.join(args.index_dir, "products.jsonl") if args.index_dir else None
    text_index = TextIndex(journal_path=journal)
    log = MessageLog()
    scheduler = CrawlerScheduler(engine, text_index, log, transport, index_dir=args.index_dir)
    params = None
    if args.model:
        params = load_params(args.model)
    if args.collection and os.path.exists(args.collection):
        collection = VectorCollection.load(args.collection)
    else:
        dim = params.config.feature_dim if params else 8192
        collection = VectorCollection("items", dim)
    if params is not None:
        scheduler.start_analytics(params, collection)
    engine.start()
    state = AppState(
        text_index=text_index,
        collection=collection,
        scheduler=scheduler,
        engine=engine,
        message_log=log,
        embed_params=params,
    )
    static = args.static if args.static and os.path.isdir(args.static) else None
    app = create_app(state, static_dir=static)
    print(f"serving on http://127.0.0.1:{args.port} "
          f"(model={'yes' if params else 'no'}, docs={text_index.count()})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snapforge", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write a synthetic glyph corpus")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=250)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("gen-fixture", help="write a fixture shop site")
    p.add_argument("--products", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_fixture)

    p = sub.add_parser("train-embedder", help="train the DCGAN embedder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=5)
    p.set_defaults(func=cmd_train_embedder)

    p = sub.add_parser("index", help="embed a corpus into a collection file")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--collection", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="run the retrieval benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--baseline", choices=["pixels", "none"], default="pixels")
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crawl", help="run a crawl request to quiescence")
    p.add_argument("--request", required=True, help="crawl request JSON file")
    p.add_argument("--corpus", default="", help="fixture corpus directory")
    p.add_argument("--live", action="store_true", help="use the live HTTP transport")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--tuple-timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index-dir", default="")
    p.add_argument("--log-dir", default="")
    p.set_defaults(func=cmd_crawl)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--model", default="")
    p.add_argument("--collection", default="")
    p.add_argument("--index-dir", default="")
    p.add_argument("--corpus", default="", help="fixture corpus directory")
    p.add_argument("--live", action="store_true")
    p.add_argument("--static", default="", help="built webapp directory to serve")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--tuple-timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    _apply_config(parser, _load_config_defaults())
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
