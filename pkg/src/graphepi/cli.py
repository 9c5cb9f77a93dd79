"""Command-line interface: graph synthesis, simulation, dataset generation,
training, grid search, evaluation, benchmarking, and serving."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .epicore import ContactChangePoint, ContactPolicy, EpiParameters, default_policy
from .evalbench import (
    bench_models,
    bench_runtime,
    dummy_estimator,
    evaluate_dummy,
    evaluate_model,
    split_dataset,
)
from .metapop import load_graph, save_graph, simulate_metapopulation, synth_graph
from .params_io import load_scenario_json, trajectory_to_csv, trajectory_to_ndjson
from .scenarios import (
    ScenarioConfig,
    export_ndjson,
    generate_dataset,
    read_dataset,
    sample_initial_state,
    write_dataset,
)
from .surrogate import (
    TrainConfig,
    arma_model_spec,
    gcn_model_spec,
    grid_search,
    load_checkpoint,
    mlp_model_spec,
    save_checkpoint,
    save_grid_csv,
    train,
)


def _parse_changes(text: str | None) -> tuple[ContactChangePoint, ...]:
    """Parse "12:0.4,20:0.2" into change points."""
    if not text:
        return ()
    changes = []
    for part in text.split(","):
        day, reduction = part.split(":")
        changes.append(ContactChangePoint(day=float(day), reduction=float(reduction)))
    return tuple(changes)


def _scenario_inputs(args) -> tuple[EpiParameters, ContactPolicy]:
    if getattr(args, "params", None):
        params, policy = load_scenario_json(args.params)
    else:
        params, policy = EpiParameters.covid_wild_type(), default_policy()
    changes = _parse_changes(getattr(args, "changes", None))
    if changes:
        policy = ContactPolicy(policy.baseline, changes, policy.ramp_width)
    return params, policy


def cmd_synth_graph(args):
    graph = synth_graph(args.nodes, args.density, args.seed)
    save_graph(args.out, graph)
    print(json.dumps(graph.summary(), indent=2))


def cmd_simulate(args):
    params, policy = _scenario_inputs(args)
    graph = load_graph(args.graph)
    rng = np.random.default_rng(args.seed)
    states = np.stack(
        [
            sample_initial_state(args.regime, rng, graph.populations[i], graph.age_shares[i])
            for i in range(graph.n_nodes)
        ]
    )
    traj = simulate_metapopulation(graph, states, params, policy, args.horizon)
    out = Path(args.out)
    nodes = [traj.node(i) for i in range(graph.n_nodes)]
    if out.suffix == ".ndjson":
        trajectory_to_ndjson(out, nodes)
    else:
        trajectory_to_csv(out, nodes)
    print(f"wrote {out} ({graph.n_nodes} nodes x {args.horizon + 1} days)")


def cmd_gen_data(args):
    config = ScenarioConfig(
        regime=args.regime,
        horizon=args.horizon,
        n_samples=args.samples,
        seed=args.seed,
        spatial=args.spatial,
        max_changes=args.max_changes,
    )
    graph = load_graph(args.graph) if args.graph else None
    params, policy = _scenario_inputs(args)
    dataset = generate_dataset(config, graph=graph, params=params, base_policy=policy,
                               workers=args.workers)
    write_dataset(args.out, dataset)
    if args.ndjson:
        export_ndjson(dataset, args.ndjson)
    print(f"wrote {args.out}: {len(dataset)} samples, features {dataset.feature_shape}")


def _model_spec(arch: str, dataset, horizon: int):
    """Parse "arma:3x64", "arma:3x64:k2:t2", "gcn:2x32", "mlp:1x256"."""
    parts = arch.split(":")
    kind = parts[0]
    depth, width = (int(v) for v in parts[1].split("x"))
    stacks = iterations = 1
    for extra in parts[2:]:
        if extra.startswith("k"):
            stacks = int(extra[1:])
        elif extra.startswith("t"):
            iterations = int(extra[1:])
    if kind == "mlp":
        return mlp_model_spec(horizon, hidden_layers=depth, width=width)
    input_width = dataset.feature_shape[1]
    if kind == "gcn":
        return gcn_model_spec(input_width, horizon, n_layers=depth, channels=width)
    if kind == "arma":
        return arma_model_spec(
            input_width, horizon, n_layers=depth, channels=width,
            stacks=stacks, iterations=iterations,
        )
    raise SystemExit(f"unknown architecture {arch!r}")


def cmd_train(args):
    dataset = read_dataset(args.data)
    plan = split_dataset(len(dataset), args.seed)
    spec = _model_spec(args.arch, dataset, dataset.config.horizon)
    adjacency = load_graph(args.graph).adjacency if args.graph else None
    config = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        verbose=args.verbose,
    )
    checkpoint = train(dataset, plan.train, plan.validation, spec, config, adjacency)
    save_checkpoint(args.out, checkpoint)
    print(json.dumps(checkpoint.meta, indent=2))


def cmd_grid_search(args):
    dataset = read_dataset(args.data)
    plan = split_dataset(len(dataset), args.seed)
    adjacency = load_graph(args.graph).adjacency if args.graph else None
    space = [
        (arch, _model_spec(arch, dataset, dataset.config.horizon)) for arch in args.archs
    ]
    config = TrainConfig(
        lr=args.lr, max_epochs=args.epochs, patience=args.patience, seed=args.seed
    )
    cells = grid_search(space, dataset, plan.train, args.k, config, adjacency)
    save_grid_csv(args.out, cells)
    for rank, cell in enumerate(cells):
        print(f"{rank:>3} {cell.name:<20} {cell.mean_val_mape:>10.3f}% {cell.status}")


def cmd_evaluate(args):
    dataset = read_dataset(args.data)
    plan = split_dataset(len(dataset), args.seed)
    checkpoint = load_checkpoint(args.model)
    adjacency = load_graph(args.graph).adjacency if args.graph else None
    report = evaluate_model(checkpoint, dataset, plan.test, adjacency)
    labels = np.stack([dataset.samples[i].labels for i in plan.train])
    test_labels = np.stack([dataset.samples[i].labels for i in plan.test])
    dummy_mape = evaluate_dummy(dummy_estimator(labels), test_labels)
    doc = report.to_dict()
    doc["dummy_mape"] = dummy_mape
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    print(json.dumps({k: v for k, v in doc.items() if k != "per_node_mape"}, indent=2))


def cmd_bench(args):
    graph = load_graph(args.graph)
    horizons = [int(h) for h in args.horizons.split(",")]
    executions = [int(k) for k in args.executions.split(",")]
    changes = [int(c) for c in args.changes.split(",")]
    if args.model:
        checkpoint = load_checkpoint(args.model)
        from .surrogate import model_from_checkpoint

        models = {checkpoint.spec.horizon: model_from_checkpoint(checkpoint)}
    else:
        models = bench_models(354, horizons, seed=args.seed)
    report = bench_runtime(
        graph,
        models,
        executions=executions,
        horizons=horizons,
        changes=changes,
        reps=args.reps,
        seed=args.seed,
    )
    report.to_csv(args.out)
    for cell in report.cells:
        print(
            f"{cell.engine:<10} k={cell.executions:<4} h={cell.horizon:<3} "
            f"c={cell.changes} {cell.median_seconds:.4f}s"
        )
    for k in executions:
        for h in horizons:
            for c in changes:
                print(f"speed-up k={k} h={h} c={c}: {report.speedup(k, h, c):.1f}x")


def cmd_serve(args):
    from .service import ServiceConfig, serve

    if args.config:
        config = ServiceConfig.from_file(args.config)
    else:
        config = ServiceConfig(
            graph_path=args.graph,
            checkpoint_paths=args.model or [],
            port=args.port,
            ui_dir=args.ui,
        )
    serve(config.apply_env_overrides())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphepi")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-graph", help="generate a synthetic mobility graph")
    p.add_argument("--nodes", type=int, default=400)
    p.add_argument("--density", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_graph)

    p = sub.add_parser("simulate", help="run the mechanistic simulator")
    p.add_argument("--graph", required=True)
    p.add_argument("--params", help="scenario JSON with parameters and policy")
    p.add_argument("--regime", choices=["outbreak", "persistent_threat"],
                   default="persistent_threat")
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--changes", help='change points as "day:reduction,..."')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".csv or .ndjson output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="generate a scenario dataset")
    p.add_argument("--graph", help="graph directory (required for --spatial)")
    p.add_argument("--params")
    p.add_argument("--regime", choices=["outbreak", "persistent_threat"], required=True)
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spatial", action="store_true")
    p.add_argument("--max-changes", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--ndjson", help="also export NDJSON here")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--graph", help="graph directory (spatial datasets)")
    p.add_argument("--arch", default="arma:3x64", help="arma:LxC[:kK][:tT] | gcn:LxC | mlp:LxC")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid-search", help="k-fold CV over architectures")
    p.add_argument("--data", required=True)
    p.add_argument("--graph")
    p.add_argument("--archs", nargs="+", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("evaluate", help="test-split MAPE report")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--graph")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="simulator vs surrogate wall-clock grid")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", help="checkpoint; default is the random bench preset")
    p.add_argument("--horizons", default="30,60,90")
    p.add_argument("--executions", default="1,10,100")
    p.add_argument("--changes", default="0,3")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the scenario HTTP service")
    p.add_argument("--config", help="service config JSON")
    p.add_argument("--graph")
    p.add_argument("--model", nargs="*")
    p.add_argument("--port", type=int, default=8100)
    p.add_argument("--ui", help="directory with the built frontend (default: frontend/dist)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
