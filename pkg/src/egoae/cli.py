"""Command-line pipeline: template inspection, matching, training, genetic
search, and the neighborhood-sum limitation demo.

Exit codes: 0 success, 1 demo/assertion or runtime failure, 2 input error.
Set EGOAE_LOG=DEBUG|INFO|WARNING to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import graph_core, synthetic
from .genetic import SearchConfig, search, write_history_csv
from .matcher import build_index
from .model import (DivergenceError, GrapeModel, ModelConfig, NumericError,
                    forward, mpnn_forward, save_checkpoint, train)
from .orbits import orbit_partition
from .templates import (catalogue, load_templates, save_templates,
                        template_by_name, NAMED_TEMPLATES, TRIANGLE,
                        canonical_form, _DOMAINS)

log = logging.getLogger("egoae.cli")


def entrypoint():
    sys.exit(main(sys.argv[1:]))


def main(argv=None) -> int:
    level = os.environ.get("EGOAE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, DivergenceError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out-dir", default=".")

    graphish = argparse.ArgumentParser(add_help=False)
    graphish.add_argument("--directed", action="store_true",
                          help="treat the edge list as directed")
    graphish.add_argument("--ignore-direction", action="store_true",
                          help="match undirected templates on directed graphs")

    feats = argparse.ArgumentParser(add_help=False)
    feats.add_argument("--features", help="headerless CSV of node features")
    feats.add_argument("--dummy-features", action="store_true",
                       help="use all-ones features instead of a file")
    feats.add_argument("--random-features", type=int, metavar="DIM",
                       help="use seeded random features of this width")
    feats.add_argument("--normalize-features", action="store_true",
                       help="row-normalize loaded features")

    p = argparse.ArgumentParser(prog="egoae", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("templates", parents=[common],
                        help="list or show built-in templates")
    sp.add_argument("action", choices=["list", "show"])
    sp.add_argument("name", nargs="?", help="template name for 'show'")
    sp.set_defaults(func=cmd_templates)

    sp = sub.add_parser("orbits", parents=[common],
                        help="print orbit partitions of templates in a file")
    sp.add_argument("template_file")
    sp.set_defaults(func=cmd_orbits)

    sp = sub.add_parser("match", parents=[common, graphish],
                        help="match one template at every ego, JSON-lines out")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--template", help="JSON file holding one template")
    sp.add_argument("--name", help="built-in template name")
    sp.add_argument("--ego", type=int, help="only this ego")
    sp.add_argument("--max-matches", type=int, default=10_000)
    sp.add_argument("--out", help="write JSON-lines here instead of stdout")
    sp.set_defaults(func=cmd_match)

    sp = sub.add_parser("train", parents=[common, graphish, feats],
                        help="train the orbit-aware model")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--templates", help="template JSON file")
    sp.add_argument("--catalogue", choices=sorted(_DOMAINS),
                    help="use a built-in template domain")
    sp.add_argument("--runs", type=int, default=1)
    sp.add_argument("--layers", type=int, default=2)
    sp.add_argument("--embed-dim", type=int, default=16)
    sp.add_argument("--dropout", type=float, default=0.3)
    sp.add_argument("--l2", type=float, default=3e-5)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--epochs", type=int, default=500)
    sp.add_argument("--patience", type=int, default=50)
    sp.add_argument("--max-matches", type=int, default=10_000)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("search", parents=[common, graphish, feats],
                        help="genetic template search")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--budget", type=float, default=3000.0,
                    help="wall-clock budget in seconds")
    sp.add_argument("--generations", type=int, default=50)
    sp.add_argument("--pool-size", type=int, default=16)
    sp.add_argument("--gene-size", type=int, default=3)
    sp.add_argument("--eliminate", type=int, default=4)
    sp.add_argument("--p-node", type=float, default=0.3)
    sp.add_argument("--p-edge", type=float, default=0.3)
    sp.add_argument("--p-cross", type=float, default=0.5)
    sp.add_argument("--size-cap", type=int, default=6)
    sp.add_argument("--eval-epochs", type=int, default=100)
    sp.add_argument("--eval-patience", type=int, default=20)
    sp.add_argument("--embed-dim", type=int, default=16)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("demo-limitation", parents=[common],
                        help="show neighborhood sums failing where orbit "
                             "matching separates")
    sp.add_argument("--layers", type=int, default=5)
    sp.add_argument("--grape-seeds", type=int, default=20)
    sp.set_defaults(func=cmd_demo_limitation)
    return p


def _outpath(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_templates(args) -> int:
    if args.action == "list":
        listing = {
            "templates": sorted(NAMED_TEMPLATES),
            "domains": {d: [t.name for t in ts] for d, ts in _DOMAINS.items()},
        }
        print(json.dumps(listing, indent=2))
        return 0
    if not args.name:
        raise ValueError("'templates show' needs a template name")
    t = template_by_name(args.name)
    print(json.dumps(t.to_json_dict()))
    return 0


def cmd_orbits(args) -> int:
    templates = load_templates(args.template_file)
    for t in templates:
        part = orbit_partition(t)
        record = {}
        if t.name is not None:
            record["name"] = t.name
        record["orbits"] = [list(o) for o in part.orbits]
        record["group_size"] = part.group_size
        print(json.dumps(record))
    return 0


def cmd_match(args) -> int:
    graph, _ = graph_core.load_edge_list(args.graph, directed=args.directed)
    if bool(args.template) == bool(args.name):
        raise ValueError("give exactly one template source: --template or --name")
    if args.template:
        templates = load_templates(args.template)
        if len(templates) != 1:
            raise ValueError(f"match needs exactly one template, file has {len(templates)}")
        template = templates[0]
    else:
        template = template_by_name(args.name)
    index = build_index(graph, template, ignore_direction=args.ignore_direction,
                        max_matches_per_ego=args.max_matches, threads=args.threads)
    egos = [args.ego] if args.ego is not None else range(graph.num_nodes)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for v in egos:
            record = {"ego": v, "matches": len(index.matches[v]),
                      "ae_sets": [list(s) for s in index.ae_sets[v]]}
            sink.write(json.dumps(record) + "\n")
    finally:
        if args.out:
            sink.close()
    return 0


def _load_dataset(args):
    graph, _ = graph_core.load_edge_list(args.graph, directed=args.directed)
    n = graph.num_nodes
    sources = sum(1 for s in (args.features, args.dummy_features,
                              args.random_features) if s)
    if sources != 1:
        raise ValueError("give exactly one of --features, --dummy-features, "
                         "--random-features")
    if args.dummy_features:
        X = graph_core.dummy_features(n)
    elif args.random_features:
        X = graph_core.random_features(n, args.random_features, args.seed)
    else:
        X = graph_core.load_features(args.features, n,
                                     row_normalize=args.normalize_features)
    labels, num_classes = graph_core.load_labels(args.labels, n)
    return graph, X, labels, num_classes


def _resolve_templates(args, graph):
    if bool(args.templates) == bool(args.catalogue):
        raise ValueError("give exactly one template source: --templates or --catalogue")
    templates = (load_templates(args.templates) if args.templates
                 else catalogue(args.catalogue))
    for t in templates:
        if t.directed and not graph.directed:
            raise ValueError(f"template {t.name or t.edges} is directed but the "
                             "graph is undirected")
        if graph.directed and not t.directed and not args.ignore_direction:
            raise ValueError("undirected template on a directed graph requires "
                             "--ignore-direction")
    return templates


def cmd_train(args) -> int:
    graph, X, labels, num_classes = _load_dataset(args)
    templates = _resolve_templates(args, graph)
    # training only needs the equivalence sets, not the raw match lists
    indices = [build_index(graph, t, ignore_direction=args.ignore_direction,
                           max_matches_per_ego=args.max_matches,
                           threads=args.threads, keep_matches=False)
               for t in templates]
    orbit_counts = [idx.partition.num_orbits for idx in indices]

    runs = []
    best_model = None
    best_val = -1.0
    for run in range(args.runs):
        run_seed = args.seed + run
        cfg = ModelConfig(num_layers=args.layers, embed_dim=args.embed_dim,
                          dropout=args.dropout, l2=args.l2, lr=args.lr,
                          max_epochs=args.epochs, patience=args.patience,
                          seed=run_seed)
        split = graph_core.make_split(graph.num_nodes, run_seed)
        graph_core.save_split(split, _outpath(args, f"split_run{run}.json"))
        model = GrapeModel(X.shape[1], num_classes, orbit_counts, cfg)
        report = train(model, graph, indices, X, labels, split, cfg)
        _write_train_log(report, _outpath(args, f"train_log_run{run}.csv"))
        trace = forward(model, graph, indices, X, training=False)
        runs.append({
            "seed": run_seed,
            "test_accuracy": report.test_acc,
            "best_val_accuracy": report.best_val_acc,
            "best_epoch": report.best_epoch,
            "epochs": report.num_epochs,
            "alpha": [lt.alpha.tolist() for lt in trace.layers],
            "beta": [[model.params[f"beta/{k}/{l}"].tolist()
                      for l in range(len(templates))]
                     for k in range(cfg.num_layers)],
        })
        if report.best_val_acc > best_val:
            best_val = report.best_val_acc
            best_model = model
    accs = [r["test_accuracy"] for r in runs]
    metrics = {
        "num_runs": args.runs,
        "mean_test_accuracy": float(np.mean(accs)),
        "std_test_accuracy": float(np.std(accs)),
        "templates": [t.name or f"{t.num_nodes}n{len(t.edges)}e" for t in templates],
        "runs": runs,
    }
    with open(_outpath(args, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2)
    save_checkpoint(_outpath(args, "checkpoint.npz"), best_model, templates)
    print(json.dumps({"mean_test_accuracy": metrics["mean_test_accuracy"],
                      "std_test_accuracy": metrics["std_test_accuracy"]}))
    return 0


def _write_train_log(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_acc,lr\n")
        for row in report.logs:
            fh.write(f"{row.epoch},{row.train_loss!r},{row.val_acc!r},{row.lr!r}\n")


def cmd_search(args) -> int:
    graph, X, labels, _ = _load_dataset(args)
    split = graph_core.make_split(graph.num_nodes, args.seed)
    eval_cfg = ModelConfig(embed_dim=args.embed_dim, lr=args.lr,
                           max_epochs=args.eval_epochs,
                           patience=args.eval_patience, seed=args.seed)
    cfg = SearchConfig(pool_size=args.pool_size, gene_size=args.gene_size,
                       eliminate=args.eliminate, p_node=args.p_node,
                       p_edge=args.p_edge, p_cross=args.p_cross,
                       generations=args.generations, budget_s=args.budget,
                       size_cap=args.size_cap, seed=args.seed,
                       threads=args.threads, eval_config=eval_cfg)
    result = search(graph, X, labels, split, cfg)
    save_templates(result.best_gene.templates, _outpath(args, "best_gene.json"))
    write_history_csv(result.history, _outpath(args, "search_history.csv"))
    summary = {
        "best_fitness": result.best_fitness,
        "generations_run": result.generations_run,
        "contains_triangle_template": any(
            canonical_form(t) == canonical_form(TRIANGLE)
            for t in result.best_gene.templates),
        "time_composition": {
            "scratch_match_s": sum(r.scratch_match_s for r in result.history),
            "incremental_match_s": sum(r.incremental_match_s for r in result.history),
            "eval_s": sum(r.eval_s for r in result.history),
        },
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_demo_limitation(args) -> int:
    c6, tri = synthetic.limitation_pair()
    X = np.ones((6, 1))

    mpnn_max = 0.0
    for depth in range(1, args.layers + 1):
        h_c6 = mpnn_forward(c6, X, depth, seed=args.seed, return_all=True)
        h_tri = mpnn_forward(tri, X, depth, seed=args.seed, return_all=True)
        for a, b in zip(h_c6, h_tri):
            stacked = np.vstack([a, b])
            diffs = stacked[:, None, :] - stacked[None, :, :]
            mpnn_max = max(mpnn_max, float(np.abs(diffs).max()))

    idx_c6 = build_index(c6, TRIANGLE)
    idx_tri = build_index(tri, TRIANGLE)
    separations = []
    for s in range(args.grape_seeds):
        cfg = ModelConfig(num_layers=2, embed_dim=16, dropout=0.0, seed=s)
        model = GrapeModel(1, 2, [idx_c6.partition.num_orbits], cfg)
        emb_c6 = forward(model, c6, [idx_c6], X).layers[-1].h_out
        emb_tri = forward(model, tri, [idx_tri], X).layers[-1].h_out
        separations.append(float(np.linalg.norm(emb_tri[0] - emb_c6[0])))

    separated = sum(1 for d in separations if d > 1e-6)
    passed = (mpnn_max == 0.0) and separated == args.grape_seeds
    report = {
        "mpnn_layers_tested": args.layers,
        "mpnn_max_pairwise_distance": mpnn_max,
        "grape_seeds": args.grape_seeds,
        "grape_separated": separated,
        "grape_min_separation": min(separations),
        "passed": passed,
    }
    print(json.dumps(report, indent=2))
    return 0 if passed else 1
