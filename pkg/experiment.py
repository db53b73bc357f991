"""Command-line entry point.

Subcommands:
  generate   sample one network and write adjacency (SMT1) and layer labels
  cluster    cluster the layers of an SMT1 tensor
  bench      run an experiment grid (JSON) and write results/summary CSVs
  plot       draw SVG panels from a bench summary
  selftest   run the noiseless end-to-end checks

Defaults for --threads, --out, --seed and --log-level can be set in a .env
file as DIMPLE_THREADS, DIMPLE_OUT_DIR, DIMPLE_SEED and DIMPLE_LOG_LEVEL.
Exit codes: 0 success, 1 failed replications or checks, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

from dimple import bench, formats, plotting, selftest
from dimple.errors import ConfigError, DimpleError
from dimple.hooi import HooiConfig, estimate_factors, init_factors
from dimple.layer_cluster import ClusterConfig, ThresholdContext, cluster_baseline, cluster_tensor
from dimple.metrics import misclassification_rate
from dimple.netgen import ModelConfig, build_ground_truth, estimate_sparsity, latent_from_dict, sample_adjacency

ROOT = Path(__file__).resolve().parent

LATENT_CHOICES = ("truncated_normal", "dirichlet", "multinomial")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _resolve(path: Path | None, default: Path) -> Path:
    if path is None:
        return default
    path = Path(path)
    return path if path.is_absolute() else ROOT / path


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        type=str,
        default=os.getenv("DIMPLE_LOG_LEVEL", "INFO"),
        help="Logging level for library messages (default INFO).",
    )
    common.add_argument(
        "--out",
        type=Path,
        default=None,
        help="Output directory. Relative paths are taken from the project root.",
    )

    parser = argparse.ArgumentParser(
        description="Simulate multiplex networks and cluster their layers.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="Sample one network.")
    gen.add_argument("--n", type=int, required=True, help="Number of nodes.")
    gen.add_argument("--L", type=int, required=True, help="Number of layers.")
    gen.add_argument("--M", type=int, default=3, help="Number of layer groups (default 3).")
    gen.add_argument("--K", type=_int_list, default=(3,), help="Latent dimension, or one per group: 3 or 2,3,3.")
    gen.add_argument("--pi", type=_float_list, default=None, help="Group probabilities (default uniform).")
    gen.add_argument("--c", type=float, default=-0.05, help="Lower end of the loading range.")
    gen.add_argument("--d", type=float, default=0.05, help="Upper end of the loading range.")
    gen.add_argument("--omega", type=float, default=1.0, help="Multiplier of off-diagonal loading entries.")
    gen.add_argument("--latent", choices=LATENT_CHOICES, default="truncated_normal")
    gen.add_argument("--sigma", type=float, default=1.0, help="Truncated normal scale.")
    gen.add_argument("--alpha", type=float, default=0.1, help="Dirichlet parameter.")
    gen.add_argument("--seed", type=int, default=int(os.getenv("DIMPLE_SEED", "0")))
    gen.add_argument("--dump-p", action="store_true", help="Also write the probability tensor as P.bin.")

    clu = sub.add_parser("cluster", parents=[common], help="Cluster the layers of an SMT1 tensor.")
    clu.add_argument("--input", type=Path, required=True, help="SMT1 adjacency file.")
    clu.add_argument("--M", type=int, required=True, help="Number of layer groups.")
    clu.add_argument("--K", type=_int_list, required=True, help="Latent dimension, or one per group.")
    clu.add_argument("--algorithm", choices=bench.ALGORITHMS, default="tensor")
    clu.add_argument("--threshold", choices=("gap", "formula", "manual"), default="gap")
    clu.add_argument("--manual-threshold", type=float, default=None)
    clu.add_argument("--gap-rule", choices=("variance", "spacing"), default="variance")
    clu.add_argument("--omega", type=float, default=1.0, help="Set 0 for diagonal loading matrices.")
    clu.add_argument("--sbm", action="store_true", help="Reduce every K_m by one (SBM / mixed membership latents).")
    clu.add_argument("--n-iter-max", type=int, default=50)
    clu.add_argument("--seed", type=int, default=int(os.getenv("DIMPLE_SEED", "0")), help="k-means seed.")
    clu.add_argument("--truth", type=Path, default=None, help="labels.csv to score against.")
    clu.add_argument("--dump-scores", action="store_true", help="Also write the L x L score matrix.")

    ben = sub.add_parser("bench", parents=[common], help="Run an experiment grid.")
    ben.add_argument("--config", type=Path, required=True, help="Grid JSON file.")
    ben.add_argument(
        "--threads",
        type=int,
        default=int(os.getenv("DIMPLE_THREADS", "1")),
        help="Replications run in parallel (default 1).",
    )
    ben.add_argument(
        "--paper", "--full", dest="full", action="store_true",
        help=f"Use {bench.FULL_REPLICATIONS} replications per cell instead of the grid default.",
    )
    ben.add_argument("--replications", type=int, default=None, help="Override the grid's replication count.")
    ben.add_argument("--seed", type=int, default=None, help="Override the grid's base seed.")
    ben.add_argument("--no-resume", action="store_true", help="Ignore existing cell checkpoints.")

    plo = sub.add_parser("plot", parents=[common], help="Plot a bench summary.")
    plo.add_argument("--summary", type=Path, required=True, help="summary.csv written by bench.")

    sub.add_parser("selftest", parents=[common], help="Run the noiseless checks.")

    args = parser.parse_args(argv)
    if getattr(args, "K", None) is not None and args.command in ("generate", "cluster"):
        if len(args.K) not in (1, args.M):
            parser.error(f"--K needs 1 or M={args.M} values, got {len(args.K)}")
        if len(args.K) == 1:
            args.K = args.K * args.M
    if args.command == "cluster" and args.threshold == "manual" and args.manual_threshold is None:
        parser.error("--threshold manual requires --manual-threshold.")
    if args.command == "bench" and args.threads < 1:
        parser.error("--threads must be >= 1.")
    return args


def _latent(args: argparse.Namespace):
    if args.latent == "truncated_normal":
        return latent_from_dict({"name": args.latent, "sigma": args.sigma})
    if args.latent == "dirichlet":
        return latent_from_dict({"name": args.latent, "alpha": args.alpha})
    return latent_from_dict({"name": args.latent})


def _out_base() -> Path:
    env = os.getenv("DIMPLE_OUT_DIR")
    return _resolve(Path(env), ROOT) if env else ROOT / "results"


def cmd_generate(args: argparse.Namespace) -> int:
    out = _resolve(args.out, _out_base() / "network")
    out.mkdir(parents=True, exist_ok=True)
    config = ModelConfig(
        n=args.n, L=args.L, K=args.K, pi=args.pi, latent=_latent(args),
        b_range=(args.c, args.d), omega=args.omega, seed=args.seed,
    )
    gt = build_ground_truth(config)
    A = sample_adjacency(gt.P, args.seed)
    edges = formats.write_smt1(A, out / "adjacency.smt1")
    formats.write_labels_csv(gt.labels, out / "labels.csv")
    if args.dump_p:
        formats.write_dense_block(gt.P, out / "P.bin")
    print(f"Saved {edges} edges ({args.n} nodes, {args.L} layers) to {out}", file=sys.stderr)
    print(f"Summary: edge density={estimate_sparsity(A):.4f}", file=sys.stderr)
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    out = _resolve(args.out, _out_base() / "clustering")
    out.mkdir(parents=True, exist_ok=True)
    A = formats.read_smt1(_resolve(args.input, args.input))
    n, _, L = A.shape
    print(f"Loaded {n} nodes x {L} layers from {args.input}", file=sys.stderr)
    cfg = ClusterConfig(
        M=args.M, threshold_mode=args.threshold, manual_threshold=args.manual_threshold,
        gap_rule=args.gap_rule, seed=args.seed,
    )
    k_eff = [k - 1 if args.sbm else k for k in args.K]

    if args.algorithm == "baseline":
        # without layer labels every layer gets the largest group dimension
        result = cluster_baseline(A, max(k_eff), args.M, cfg)
    else:
        hooi_cfg = HooiConfig.for_model(n, L, args.K, sbm=args.sbm, omega=args.omega, n_iter_max=args.n_iter_max)
        if args.algorithm == "tensor":
            _, factors = estimate_factors(A, hooi_cfg)
            print(f"HOOI stopped after {factors.iterations_run} iterations (eps={factors.final_eps:.2e})", file=sys.stderr)
        else:
            factors = init_factors(A, hooi_cfg)
        formats.write_factor_csv(factors.U, out / "U.csv", name="U")
        formats.write_factor_csv(factors.W, out / "W.csv", name="W")
        context = ThresholdContext(n=n, L=L, M=args.M, K=sum(k_eff) / args.M, rho_hat=estimate_sparsity(A))
        result = cluster_tensor(factors.W, cfg, context)

    formats.write_clustering_csv(result.labels, out / "clustering.csv")
    if args.dump_scores:
        formats.write_matrix_csv(result.score_matrix, out / "scores.csv")
    print(f"Saved {L} layer labels to {out / 'clustering.csv'}", file=sys.stderr)
    if args.truth is not None:
        truth = formats.read_labels_csv(_resolve(args.truth, args.truth))
        report = misclassification_rate(result.labels, truth, args.M)
        print(f"Summary: r_bl={report.r_bl:.4f} ({report.mismatches} of {L} layers misclustered)", file=sys.stderr)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    grid = bench.ExperimentGrid.from_json(_resolve(args.config, args.config))
    replications = args.replications
    if replications is None and args.full:
        replications = bench.FULL_REPLICATIONS
    grid = grid.with_overrides(replications=replications, base_seed=args.seed)
    out = _resolve(args.out, _out_base() / grid.name)
    cells = grid.cells()
    print(
        f"Loaded grid {grid.name!r}: {len(cells)} cells x {grid.replications} replications, "
        f"algorithms {', '.join(grid.algorithms)}",
        file=sys.stderr,
    )
    report = bench.run_grid(grid, out, threads=args.threads, resume=not args.no_resume)
    print(f"Saved {report.rows} rows to {report.results_path}", file=sys.stderr)
    print(f"Summary: {report.error_rows} error rows, {report.cells_resumed} cells resumed", file=sys.stderr)
    return 1 if report.error_rows else 0


def cmd_plot(args: argparse.Namespace) -> int:
    summary = _resolve(args.summary, args.summary)
    out = _resolve(args.out, summary.parent / "plots")
    written = plotting.plot_summary_file(summary, out)
    print(f"Saved {len(written)} plots to {out}", file=sys.stderr)
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} ({r.seconds:.1f}s)")
    failed = sum(not r.passed for r in results)
    print(f"Summary: {len(results) - failed} passed, {failed} failed", file=sys.stderr)
    return 1 if failed else 0


COMMANDS = {
    "generate": cmd_generate,
    "cluster": cmd_cluster,
    "bench": cmd_bench,
    "plot": cmd_plot,
    "selftest": cmd_selftest,
}


def main(argv: list[str] | None = None) -> None:
    load_dotenv()
    args = parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        code = COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        raise SystemExit(2)
    except DimpleError as e:
        print(f"Failed: {e}", file=sys.stderr)
        raise SystemExit(1)
    raise SystemExit(code)


if __name__ == "__main__":
    main()
