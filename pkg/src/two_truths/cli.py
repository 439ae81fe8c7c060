"""Command-line interface for spectral graph clustering and the two-truths analyses.

Every command resolves its parameters from built-in defaults, an optional JSON
config file and the flags actually given, writes its outputs (CSV/JSON) into
--out-dir together with resolved_config.json, and reports through the
two_truths logger.

Exit codes: 0 success, 1 fatal error, 2 missing or unreadable input,
3 partial batch failure (details in failures.json).
"""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Callable, Dict, Sequence

from two_truths.core.evaluation import contingency_to_csv
from two_truths.core.graph import EdgeListFormat, load_edge_list, load_labels, save_edge_list, save_labels
from two_truths.core.sbm import load_fixture, load_params, sample_sbm
from two_truths.errors import TwoTruthsError
from two_truths.experiments import (
    MAP_HEADER,
    PROJECT_HEADER,
    chernoff_map,
    composite_projection,
    grid_axis,
    model_selection_scatter,
    project_batch,
    project_labels,
    projection_row,
    quadrant_summary,
    run_two_truths_experiment,
    sqrt_curve,
)
from two_truths.pipeline import SpectralClusterer
from two_truths.utils.config import RunConfig, resolve_config
from two_truths.utils.file_utils import (
    ManifestItem,
    applicable_merge_maps,
    load_merge_maps,
    read_manifest,
    write_csv,
    write_json,
)
from two_truths.utils.logger import get_logger, setup_logger

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_MISSING_INPUT = 2
EXIT_PARTIAL = 3

LOGGER = get_logger("two_truths.cli")


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(config: RunConfig, *names: str) -> None:
    missing = [name for name in names if getattr(config, name) in (None, "")]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise ValueError(f"'{config.command}' needs {flags}")


def _clusterer(config: RunConfig, n_jobs: int = 1) -> SpectralClusterer:
    return SpectralClusterer(
        solver=config.solver_options(),
        gmm_options=config.gmm_options(),
        k_max=config.k_max,
        elbow_index=config.elbow_index,
        max_scree=config.max_scree,
        seed=config.seed,
        n_jobs=n_jobs,
    )


def _edge_format(config: RunConfig) -> EdgeListFormat:
    return EdgeListFormat(weighted=config.weighted, threshold=config.binarize_threshold,
                          compact_ids=config.compact_ids)


def _write_failures(out: Path, failures: Sequence[Dict]) -> None:
    write_json(out / "failures.json", {"count": len(failures), "failures": list(failures)})


# ==========================================================
# COMMANDS
# ==========================================================
def _handle_cluster(config: RunConfig) -> int:
    _require(config, "graph")
    out = _out_dir(config)
    graph, report = load_edge_list(config.graph, _edge_format(config), return_report=True)
    if report.vertex_map:
        rows = sorted(((vertex, external) for external, vertex in report.vertex_map.items()))
        write_csv(out / "vertex_map.csv", ["vertex_id", "external_id"], rows)

    truths = {}
    if config.labels:
        labels = load_labels(config.labels, graph.n)
        truths["labels"] = labels
        for name, mapping in applicable_merge_maps(load_merge_maps(config.merge_maps), labels.alphabet).items():
            truths[name] = labels.merge(mapping)

    clusterer = _clusterer(config, n_jobs=config.threads)
    results = {}
    summary = {}
    for method in config.methods():
        result = clusterer.cluster(graph, method, config.d, config.K)
        results[method] = result
        tag = method.lower()
        write_csv(out / f"partition_{tag}.csv", ["vertex_id", "cluster"],
                  zip(result.vertices.tolist(), result.assignment.tolist()))
        write_json(out / f"model_{tag}.json", result.model.to_dict())
        if result.elbow is not None:
            write_json(out / f"elbow_{tag}.json", result.elbow.to_dict())
        if result.k_selection is not None:
            write_json(out / f"kselect_{tag}.json", result.k_selection.to_dict())
        entry = result.summary()
        if truths:
            scores = clusterer.score(result, truths)
            write_json(out / f"ari_{tag}.json", {name: score.to_dict() for name, score in scores.items()})
            for name, score in scores.items():
                contingency_to_csv(score, out / f"contingency_{tag}_{name}.csv",
                                   col_names=_truth_alphabet(truths[name], result.vertices))
            entry["ari"] = {name: score.ari for name, score in scores.items()}
        summary[method] = entry

    if len(results) == 2:
        between = clusterer.compare(results["LSE"], results["ASE"], n_perm=config.n_perm, seed=config.seed)
        write_json(out / "ari_between_methods.json", between.to_dict())
        summary["ari_between_methods"] = between.ari

    write_json(out / "summary.json", summary)
    config.write_resolved(out)
    LOGGER.debug("Clusterer stats: %s", clusterer.get_stats())
    for method, entry in summary.items():
        if isinstance(entry, dict):
            print(f"{method}: d={entry['d']} K={entry['K']}" + (f" ARI={entry['ari']}" if "ari" in entry else ""))
    print(f"Outputs written to {out}")
    return EXIT_OK


def _truth_alphabet(labels, vertices):
    present = {labels.values[v] for v in vertices.tolist()}
    return [name for name in labels.alphabet if name in present]


def _handle_project(config: RunConfig) -> int:
    out = _out_dir(config)
    maps = load_merge_maps(config.merge_maps)
    fmt = _edge_format(config)

    if config.composite:
        _require(config, "manifest")
        rows, params, composite = composite_projection(read_manifest(config.manifest), maps,
                                                       config.binarize_threshold, config.ratio_threshold, fmt)
        save_edge_list(composite, out / "composite.edges")
        failures = []
    elif config.manifest:
        items = read_manifest(config.manifest)
        rows, params, failures = project_batch(items, maps, config.ratio_threshold, fmt, n_jobs=config.threads)
    else:
        _require(config, "graph", "labels")
        item = ManifestItem(Path(config.graph), Path(config.labels), Path(config.graph).stem)
        graph = load_edge_list(item.graph_path, fmt)
        labels = load_labels(item.label_path, graph.n)
        projections = project_labels(graph, labels, maps, config.ratio_threshold)
        rows = [projection_row(item.graph_id, name, p, point) for name, p, point in projections]
        params = [(item.graph_id, name, p) for name, p, _ in projections]
        failures = []

    write_csv(out / "projection.csv", PROJECT_HEADER, rows)
    for graph_id, name, block_params in params:
        write_json(out / "params" / f"{graph_id}_{name}.json", block_params.to_dict())
    config.write_resolved(out)
    print(f"Projected {len(rows)} (graph, merge) pair(s) into {out / 'projection.csv'}")
    if failures:
        _write_failures(out, [f.to_dict() for f in failures])
        LOGGER.error("%d graph(s) failed; see %s", len(failures), out / "failures.json")
        return EXIT_PARTIAL
    return EXIT_OK


def _handle_chernoff_map(config: RunConfig) -> int:
    out = _out_dir(config)
    x_values = grid_axis(config.x_range, config.resolution)
    y_values = grid_axis(config.y_range, config.resolution)
    points = chernoff_map(x_values, y_values, scale=config.scale, n_big=config.n_big, seed=config.seed,
                          solver=config.solver_options(), n_jobs=config.threads)
    write_csv(out / "chernoff_map.csv", MAP_HEADER, [p.row() for p in points])
    write_csv(out / "sqrt_curve.csv", ["x", "y"], sqrt_curve(x_values))
    config.write_resolved(out)
    flagged = sum(1 for p in points if p.status != "ok")
    print(f"Chernoff map: {len(points)} point(s), {flagged} flagged -> {out / 'chernoff_map.csv'}")
    return EXIT_OK


def _handle_experiment(config: RunConfig) -> int:
    out = _out_dir(config)
    fixture = load_fixture(config.fixture)
    report = run_two_truths_experiment(
        fixture,
        n=config.n,
        trials=config.trials,
        seed=config.seed,
        fixture_name=Path(config.fixture).stem,
        clusterer=_clusterer(config),
        four_block_check=config.four_block_check,
        n_jobs=config.threads,
        ari_threshold=config.ari_threshold,
        max_failure_fraction=config.max_failure_fraction,
    )
    write_json(out / "experiment_report.json", report.to_dict())
    write_csv(out / "delta_ari.csv", ["trial", "seed", "x_delta_ari_lse", "y_delta_ari_ase", "quadrant"],
              report.delta_rows())
    write_csv(out / "timings.csv", ["trial", "wall_time"], [[r.trial, r.wall_time] for r in report.records])
    config.write_resolved(out)

    for method, rates in report.success_rates().items():
        print(f"{method}: " + ", ".join(f"P(ARI_{truth} > {config.ari_threshold}) = {rate:.2f}"
                                        for truth, rate in rates.items()))
    if report.failures:
        _write_failures(out, [{"trial": r.trial, "seed": r.seed, "error": r.error} for r in report.failures])
    if report.failed:
        LOGGER.error("%d of %d trials failed, above the %.0f%% tolerance",
                     len(report.failures), report.trials, 100 * config.max_failure_fraction)
        return EXIT_PARTIAL
    return EXIT_OK


def _handle_scatter(config: RunConfig) -> int:
    _require(config, "manifest")
    out = _out_dir(config)
    items = read_manifest(config.manifest)
    maps = load_merge_maps(config.merge_maps)
    header, rows, failures = model_selection_scatter(
        items, _clusterer(config), maps, methods=config.methods(), fmt=_edge_format(config), n_jobs=config.threads
    )
    write_csv(out / "model_selection.csv", header, rows)
    if {"ARI_LR", "ARI_GW"} <= set(header):
        write_json(out / "scatter_summary.json", quadrant_summary(rows, header))
    config.write_resolved(out)
    print(f"Model selection: {len(rows)} row(s) -> {out / 'model_selection.csv'}")
    if failures:
        _write_failures(out, [f.to_dict() for f in failures])
        LOGGER.error("%d item(s) failed; see %s", len(failures), out / "failures.json")
        return EXIT_PARTIAL
    return EXIT_OK


def _handle_sample(config: RunConfig) -> int:
    out = _out_dir(config)
    params = load_params(config.params) if config.params else load_fixture(config.fixture).params
    graph, labels = sample_sbm(params, config.n, config.seed)
    save_edge_list(graph, out / "graph.edges")
    save_labels(labels, out / "labels.csv")
    write_json(out / "params.json", params.to_dict())
    config.write_resolved(out)
    print(f"Sampled n={graph.n} |E|={graph.n_edges} -> {out}")
    return EXIT_OK


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "cluster": _handle_cluster,
    "project": _handle_project,
    "chernoff-map": _handle_chernoff_map,
    "experiment": _handle_experiment,
    "scatter": _handle_scatter,
    "sample": _handle_sample,
}


# ==========================================================
# PARSER
# ==========================================================
def _global_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int, help='Base random seed (default: 0)')
    common.add_argument('--out-dir', dest='out_dir', help='Output directory (default: out)')
    common.add_argument('--config', help='JSON config file; explicit flags override its values')
    common.add_argument('--threads', type=int, help='Worker processes (default: TWO_TRUTHS_THREADS or CPU count)')
    common.add_argument('--log-level', dest='log_level', help='DEBUG, INFO, WARNING or ERROR')
    common.add_argument('--log-file', dest='log_file', help='Also write the log to this file')
    return common


def _graph_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--compact-ids', dest='compact_ids', action='store_true',
                        help='Relabel arbitrary vertex ids to 0..n-1 (map written to vertex_map.csv)')
    parser.add_argument('--weighted', action='store_true', help='Read a third weight column and binarize it')
    parser.add_argument('--threshold', dest='binarize_threshold', type=float,
                        help='Keep weighted edges strictly above this value (default: 0)')
    parser.add_argument('--merge-maps', dest='merge_maps',
                        help='JSON {"name": {"fine": "coarse"}} (default: LR and GW connectome maps)')


def _clustering_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--method', choices=['ASE', 'LSE', 'both'], help='Embedding (default: both)')
    parser.add_argument('--k-max', dest='k_max', type=int, help='Largest K tried by BIC (default: 10)')
    parser.add_argument('--elbow-index', dest='elbow_index', type=int, help='Scree elbow to use (default: 1)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Spectral graph clustering GMM o {LSE, ASE} and two-truths analyses.")
    subparsers = parser.add_subparsers(dest='command')
    common = [_global_options()]

    cluster = subparsers.add_parser('cluster', parents=common, argument_default=argparse.SUPPRESS,
                                    help='Cluster one graph with GMM o LSE and/or GMM o ASE')
    cluster.add_argument('--graph', help='Edge-list file')
    cluster.add_argument('--labels', help='Optional label file scored against the clustering')
    cluster.add_argument('--d', type=int, help='Embedding dimension (default: profile likelihood)')
    cluster.add_argument('--K', type=int, help='Number of clusters (default: BIC)')
    cluster.add_argument('--n-perm', dest='n_perm', type=int, help='Permutations for the ASE/LSE agreement test')
    _graph_options(cluster)
    _clustering_options(cluster)

    project = subparsers.add_parser('project', parents=common, argument_default=argparse.SUPPRESS,
                                    help='A-priori block-model projection of labeled graphs')
    project.add_argument('--graph', help='Edge-list file')
    project.add_argument('--labels', help='Label file for --graph')
    project.add_argument('--manifest', help='Batch CSV: graph_path,label_path,graph_id')
    project.add_argument('--composite', action='store_true',
                         help='Average the manifest graphs, keep pairs above --threshold and project the composite')
    project.add_argument('--ratio-threshold', dest='ratio_threshold', type=float,
                         help='Structure classification ratio (default: 2)')
    _graph_options(project)

    cmap = subparsers.add_parser('chernoff-map', parents=common, argument_default=argparse.SUPPRESS,
                                 help='Chernoff ratio over a grid of the EDA plane')
    cmap.add_argument('--x-range', dest='x_range', type=float, nargs=2, metavar=('LOW', 'HIGH'))
    cmap.add_argument('--y-range', dest='y_range', type=float, nargs=2, metavar=('LOW', 'HIGH'))
    cmap.add_argument('--resolution', type=int, help='Grid points per axis (default: 10)')
    cmap.add_argument('--scale', type=float, help='max(a, c) of every grid model (default: 0.4)')
    cmap.add_argument('--n-big', dest='n_big', type=int, help='Vertices of the large sample (default: 4000)')

    experiment = subparsers.add_parser('experiment', parents=common, argument_default=argparse.SUPPRESS,
                                       help='Two-truths Monte Carlo experiment on a 4-block fixture')
    experiment.add_argument('--fixture', help='Packaged fixture name or JSON path (default: two_truths_4block)')
    experiment.add_argument('--n', type=int, help='Vertices per sample (default: 4000)')
    experiment.add_argument('--trials', type=int, help='Number of trials (default: 50)')
    experiment.add_argument('--four-block-check', dest='four_block_check', action='store_true',
                            help='Also score d = K = 4 clusterings against the four blocks')
    experiment.add_argument('--ari-threshold', dest='ari_threshold', type=float,
                            help='Success threshold on ARI (default: 0.95)')

    scatter = subparsers.add_parser('scatter', parents=common, argument_default=argparse.SUPPRESS,
                                    help='(d-hat, K-hat) model selection over a batch of graphs')
    scatter.add_argument('--manifest', help='Batch CSV: graph_path,label_path,graph_id')
    _graph_options(scatter)
    _clustering_options(scatter)

    sample = subparsers.add_parser('sample', parents=common, argument_default=argparse.SUPPRESS,
                                   help='Draw a graph from an SBM')
    sample.add_argument('--params', help='SbmParams JSON (default: the --fixture parameters)')
    sample.add_argument('--fixture', help='Packaged fixture name or JSON path')
    sample.add_argument('--n', type=int, help='Number of vertices (default: 4000)')

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_FATAL

    overrides = {key: value for key, value in vars(args).items() if key not in ('command', 'config')}
    try:
        config = resolve_config(overrides, getattr(args, 'config', None), args.command)
    except FileNotFoundError as exc:
        setup_logger().error("Config file not found: %s", exc.filename)
        return EXIT_MISSING_INPUT
    except ValueError as exc:
        setup_logger().error("Invalid configuration: %s", exc)
        return EXIT_FATAL

    logger = setup_logger("two_truths", config.log_level, config.log_file)
    try:
        return HANDLERS[args.command](config)
    except FileNotFoundError as exc:
        logger.error("Input not found: %s", exc.filename or exc)
        return EXIT_MISSING_INPUT
    except TwoTruthsError as exc:
        logger.error(exc.describe())
        return EXIT_FATAL
    except OSError as exc:
        logger.error("Cannot read input: %s", exc)
        return EXIT_MISSING_INPUT
    except ValueError as exc:
        logger.error("[two_truths] %s", exc)
        return EXIT_FATAL


if __name__ == '__main__':
    raise SystemExit(main())
