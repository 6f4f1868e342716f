"""Command line interface: embedding, training, mapping, topics, evaluation,
and the HTTP service.

Relative input paths resolve against $PROMPTMAP_DATA_DIR when it is set.
Prompt texts are embedded with the toy embedder, so pass the same --seed the
store was embedded with.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import clustering, gridmap
from . import corpus as corpus_io
from . import topics as topics_mod
from .attention import (
    AttentionLayer,
    PromptWeighting,
    TrainConfig,
    compose_prompts,
    dynamic_embedding,
    evaluate_prompt,
    load_layer,
    relevance,
    save_layer,
    train,
)
from .corpus import resolve_data_path
from .embeddings import EmbeddingStore, ToyEmbedder, import_jsonl, load_store, save_store


def _write_report(report: dict, path: str | None):
    if not path:
        return
    with open(path, "w", encoding="utf-8") as out:
        json.dump(report, out, indent=2, sort_keys=True)
        out.write("\n")
    print(f"report written to {path}")


def _load_layer(store: EmbeddingStore, checkpoint: str | None) -> AttentionLayer:
    if checkpoint is None:
        return AttentionLayer.identity(store.dim)
    layer = load_layer(resolve_data_path(checkpoint))
    if layer.dim != store.dim:
        raise SystemExit(f"checkpoint dim {layer.dim} does not match store dim {store.dim}")
    return layer


def _weighting(args, store: EmbeddingStore) -> PromptWeighting:
    embedder = ToyEmbedder(store.dim, args.seed)
    prompts = [embedder.embed_prompt(text) for text in args.prompt]
    if args.weights:
        weights = [float(w) for w in args.weights.split(",")]
        if len(weights) != len(prompts):
            raise SystemExit(f"{len(weights)} weights for {len(prompts)} prompts")
    else:
        weights = [1.0] * len(prompts)
    return compose_prompts(prompts, weights)


def _doc_scores(layer, weighting, store):
    raw = np.array([relevance(layer, weighting, doc) for doc in store])
    dynamic = np.stack([dynamic_embedding(layer, weighting, doc) for doc in store])
    return raw, dynamic


def cmd_embed(args) -> int:
    if (args.input is None) == (args.jsonl is None):
        raise SystemExit("provide exactly one of --input (CSV) or --jsonl")
    if args.jsonl:
        store = import_jsonl(resolve_data_path(args.jsonl))
    else:
        column_map = {"id": args.id_col, "title": args.title_col, "text": args.text_col}
        records = corpus_io.load_corpus_csv(resolve_data_path(args.input), column_map)
        store = corpus_io.embed_records(records, args.dim, args.seed)
    save_store(store, args.output)
    print(f"embedded {len(store)} documents (dim {store.dim}) -> {args.output}")
    return 0


def cmd_train(args) -> int:
    store = load_store(resolve_data_path(args.store))
    pairs = corpus_io.load_training_pairs(resolve_data_path(args.pairs))
    cfg = TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size,
        seed=args.seed, init_scale=args.init_scale,
    )
    embedder = ToyEmbedder(store.dim, args.seed)
    layer, history = train(store, pairs, cfg, prompt_embedder=embedder)
    save_layer(layer, args.output)
    if history:
        print(f"trained {args.epochs} epochs on {len(pairs)} pairs: "
              f"loss {history[0]:.4f} -> {history[-1]:.4f}")
    else:
        print("initialized checkpoint (no training epochs)")
    print(f"checkpoint -> {args.output}")
    return 0


def cmd_map(args) -> int:
    store = load_store(resolve_data_path(args.store))
    layer = _load_layer(store, args.checkpoint)
    weighting = _weighting(args, store)
    raw, dynamic = _doc_scores(layer, weighting, store)
    norm = gridmap.normalize_relevance(raw)
    items = [
        gridmap.MapItem(id=doc.doc_id, embedding=dynamic[i], relevance=float(norm[i]))
        for i, doc in enumerate(store)
    ]
    cfg = gridmap.MapConfig(
        omega_s=args.omega_s, omega_r=args.omega_r, epochs=args.epochs,
        lr0=args.lr, sigma0=args.sigma0, slack=args.slack, seed=args.seed,
    )
    grid, history = gridmap.fit(items, cfg)
    gridmap.save_layout(grid, history, args.output)
    print(f"map: {grid.n_cells} cells over {grid.layer_count} layers, "
          f"loss {history[0]:.4f} -> {history[-1]:.4f} -> {args.output}")
    return 0


def cmd_topics(args) -> int:
    store = load_store(resolve_data_path(args.store))
    layer = _load_layer(store, args.checkpoint)
    weighting = _weighting(args, store)
    results = {doc.doc_id: evaluate_prompt(layer, weighting, doc) for doc in store}
    model = topics_mod.AttentionTopicModel(
        n_topics=args.k if args.k > 0 else None,
        k_max=args.k_max, restarts=args.restarts, iters=args.iters,
        selection_iters=args.selection_iters, seed=args.seed, vocab_cap=args.vocab_cap,
    )
    model.fit(results, store)
    topics_mod.save_topics(model.decomposition_, args.output, threshold=args.threshold)
    print(f"{model.k_} topics over {len(model.matrix_.vocab)} tokens -> {args.output}")
    return 0


def cmd_eval_digits(args) -> int:
    if args.digits_csv:
        items = corpus_io.load_digits_csv(resolve_data_path(args.digits_csv))
    else:
        from sklearn.datasets import load_digits

        data = load_digits()
        items = corpus_io.digits_items(data.data, data.target)
    digits = corpus_io.digits_labels(items)

    cfg = gridmap.MapConfig(
        omega_s=args.omega_s, omega_r=args.omega_r, epochs=args.epochs,
        lr0=args.lr, slack=args.slack, seed=args.seed,
    )
    start = time.perf_counter()
    grid, history = gridmap.fit(items, cfg)
    elapsed = time.perf_counter() - start

    coords = np.stack([grid.positions[grid.assignments[item.id]] for item in items])
    layers = np.array([grid.layers[grid.assignments[item.id]] for item in items])
    from scipy.stats import spearmanr

    metrics = {
        "n_items": len(items),
        "silhouette": clustering.silhouette(coords, digits),
        "spearman_digit_layer": float(spearmanr(digits, layers).statistic),
        "rpc_initial": gridmap.rpc(grid, items, gammas=grid.initial_gammas),
        "rpc_final": gridmap.rpc(grid, items),
        "loss_initial": history[0],
        "loss_final": history[-1],
        "seconds": round(elapsed, 2),
    }
    for key in ("silhouette", "spearman_digit_layer", "rpc_initial", "rpc_final",
                "loss_initial", "loss_final", "seconds"):
        print(f"{key:22s} {metrics[key]: .4f}")
    _write_report(
        {"config": {k: v for k, v in vars(args).items() if k != "func"}, "metrics": metrics},
        args.report,
    )
    return 0


def _precision_at_k(ranked_ids, group_of: dict, group: int, k: int = 10) -> float:
    hits = sum(1 for doc_id in ranked_ids[:k] if group_of[doc_id] == group)
    return hits / k


def cmd_eval_retrieval(args) -> int:
    clustering_mode = args.preset == "clustering"
    dim = args.dim if args.dim is not None else (32 if clustering_mode else 48)
    n_docs = args.n_docs if args.n_docs is not None else (120 if clustering_mode else 200)
    epochs = args.epochs if args.epochs is not None else (300 if clustering_mode else 25)
    lr = args.lr if args.lr is not None else (0.01 if clustering_mode else 0.005)

    if clustering_mode:
        # Single-facet carriers plus unlabeled filler; a mixed-facet training
        # corpus makes facet-wide prompt associations cancel under the
        # contrastive objective, and the held-out dual-labeled docs are what
        # the two clusterings are scored on.
        cfg = corpus_io.SynthConfig(
            n_docs=n_docs, n_groups=args.groups, n_styles=args.styles, dim=dim,
            background_docs=100, dual_eval_docs=80,
            sig_tokens_per_doc=2, style_tokens_per_doc=2, background_tokens_per_doc=0,
            filler_tokens=24, eval_sig_tokens=6, eval_background_tokens=40,
            signature_vocab=2, background_vocab=60, train_prompts_per_group=25,
        )
    else:
        cfg = corpus_io.SynthConfig(n_docs=n_docs, n_groups=args.groups,
                                    n_styles=args.styles, dim=dim)
    synth = corpus_io.synth_corpus(cfg, seed=args.seed)
    embedder = synth.embedder()
    train_cfg = TrainConfig(epochs=epochs, learning_rate=lr,
                            batch_size=args.batch_size, seed=args.seed)
    # training_store() is the full store when no docs are held out
    layer, history = train(synth.training_store(), synth.train_pairs, train_cfg,
                           prompt_embedder=embedder)
    metrics: dict = {"final_train_loss": history[-1] if history else None}

    if clustering_mode:
        eval_ids = set(synth.eval_doc_ids)
        keep = np.array([d.doc_id in eval_ids for d in synth.store])
        eval_docs = [d for d in synth.store if d.doc_id in eval_ids]
        static = np.stack([d.vectors.mean(axis=0) for d in eval_docs])
        metrics["ari"] = {}
        for facet, prompt_text in synth.facet_prompts.items():
            labels_true = synth.labels[facet][keep]
            k = len(np.unique(labels_true))
            weighting = embedder.embed_prompt(prompt_text)
            dynamic = np.stack([dynamic_embedding(layer, weighting, d) for d in eval_docs])
            ari_pam = clustering.ari(labels_true,
                                     clustering.kmeans(dynamic, k, seed=args.seed).label_array)
            ari_static = clustering.ari(labels_true,
                                        clustering.kmeans(static, k, seed=args.seed).label_array)
            metrics["ari"][facet] = {"prompt_conditioned": ari_pam, "static": ari_static}
            print(f"ari[{facet}]  prompt-conditioned {ari_pam:.3f}  static {ari_static:.3f}")
    else:
        store = synth.store
        group_of = {store.doc_ids[i]: int(synth.labels["topic"][i]) for i in range(len(store))}
        identity = AttentionLayer.identity(store.dim)
        sums = np.stack([doc.token_sum() for doc in store])
        doc_ids = np.array(store.doc_ids)

        def accuracy(candidate) -> float:
            scores = []
            for text, group in synth.eval_prompts:
                p = embedder.embed_prompt(text).vector
                rel = (sums @ candidate.w_k.T) @ (candidate.w_q @ p)
                ranked = doc_ids[np.argsort(-rel, kind="stable")]
                scores.append(_precision_at_k(list(ranked), group_of, group))
            return float(np.mean(scores))

        metrics["top10_trained"] = accuracy(layer)
        metrics["top10_identity"] = accuracy(identity)
        print(f"top-10 accuracy  trained {metrics['top10_trained']:.3f}  "
              f"identity {metrics['top10_identity']:.3f}")

    report = {"config": {k: v for k, v in vars(args).items() if k != "func"},
              "metrics": metrics}
    _write_report(report, args.report)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a corpus into a binary store")
    p.add_argument("--input", help="corpus CSV (id,title,text)")
    p.add_argument("--jsonl", help="precomputed embeddings, JSON lines")
    p.add_argument("--id-col", default="id")
    p.add_argument("--title-col", default="title")
    p.add_argument("--text-col", default="text")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train", help="train the attention layer on prompt/doc pairs")
    p.add_argument("--store", required=True)
    p.add_argument("--pairs", required=True, help="JSON lines {prompt, positive_doc_id}")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("map", help="fit the circular map and export its layout")
    p.add_argument("--store", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--prompt", action="append", required=True)
    p.add_argument("--weights", help="comma-separated prompt weights")
    p.add_argument("--omega-s", type=float, default=1.0)
    p.add_argument("--omega-r", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--slack", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("topics", help="factorize corpus attention into topics")
    p.add_argument("--store", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--prompt", action="append", required=True)
    p.add_argument("--weights")
    p.add_argument("--k", type=int, default=0, help="topic count; 0 selects automatically")
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--selection-iters", type=int, default=100)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--vocab-cap", type=int, default=topics_mod.DEFAULT_VOCAB_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("eval-digits", help="digits benchmark: silhouette, layer order, RPC")
    p.add_argument("--digits-csv", help="64 pixel columns + label; bundled data if omitted")
    p.add_argument("--omega-s", type=float, default=1.0)
    p.add_argument("--omega-r", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--slack", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_digits)

    p = sub.add_parser("eval-retrieval", help="synthetic retrieval / clustering benchmark")
    p.add_argument("--preset", choices=("retrieval", "clustering"), default="retrieval",
                   help="retrieval: top-10 accuracy vs untrained baseline; "
                        "clustering: per-facet ARI vs static mean pooling")
    p.add_argument("--dim", type=int, help="embedding dim; preset default 48 or 32")
    p.add_argument("--n-docs", type=int, help="labeled docs; preset default 200 or 120")
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--styles", type=int, default=3)
    p.add_argument("--epochs", type=int, help="preset default 25 or 300")
    p.add_argument("--lr", type=float, help="preset default 0.005 or 0.01")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
