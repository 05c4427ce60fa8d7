"""Command-line front end: precompute, query, ssad, eval and info.

Exit status is 0 on success, 1 on a usage error and 2 on a data error
(unreadable mesh, damaged or mismatched precomputation, bad vertex index).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

from .embedding import geodesic_embedding
from .errors import GeoEmbedError
from .evaluation import benchmark_queries, exact_source, mean_relative_error, query_source, sample_pairs
from .geodesic import write_distance_field
from .mesh import classify_vertices, load_mesh
from .optim import SolverOptions
from .persistence import dump_json, load_precomputation, read_header, save_precomputation
from .query import query_distance, single_source
from .svg import SvgParams, build_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("geoembed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass(frozen=True)
class CliConfig:
    """Parsed command line."""

    subcommand: str
    mesh: str | None = None
    pre: str | None = None
    out: str | None = None
    m: int = 8
    l: int = 46  # noqa: E741
    K: int = 60
    K_S: int = 20
    seed: int = 0
    src: int | None = None
    dst: int | None = None
    pairs: int = 1000
    csv: str | None = None
    json_dump: str | None = None
    threads: int = 1
    verbose: int = 0


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="geoembed", description="Geodesic distance queries on triangle meshes.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def threads(sp):
        sp.add_argument("--threads", type=_positive, default=None,
                        help="worker threads (default: $GE_THREADS or 1)")

    pre = sub.add_parser("precompute", help="build the graph and embedding for a mesh")
    pre.add_argument("--mesh", required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--dim", dest="m", type=_positive, default=8, help="Euclidean dimension")
    pre.add_argument("--rounds", dest="l", type=_non_negative, default=46,
                     help="cascade rounds")
    pre.add_argument("--k", dest="K", type=_positive, default=60, help="neighbour cap")
    pre.add_argument("--ks", dest="K_S", type=_positive, default=20,
                     help="saddle neighbour cap")
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--json-dump", dest="json_dump", default=None,
                     help="also write a human-readable JSON summary")
    threads(pre)

    q = sub.add_parser("query", help="distance between two vertices")
    q.add_argument("--mesh", required=True)
    q.add_argument("--pre", required=True)
    q.add_argument("--src", type=int, required=True)
    q.add_argument("--dst", type=int, required=True)

    s = sub.add_parser("ssad", help="distances from one vertex to all vertices")
    s.add_argument("--mesh", required=True)
    s.add_argument("--pre", required=True)
    s.add_argument("--src", type=int, required=True)
    s.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="mean relative error against exact distances")
    e.add_argument("--mesh", required=True)
    e.add_argument("--pre", required=True)
    e.add_argument("--pairs", type=_positive, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True, help="JSON report path")
    e.add_argument("--csv", default=None, help="per-pair error CSV path")
    threads(e)

    i = sub.add_parser("info", help="print the header of a precomputation file")
    i.add_argument("--pre", required=True)
    return p


def parse_config(argv) -> CliConfig:
    ns = build_parser().parse_args(argv)
    fields = {k: v for k, v in vars(ns).items() if k in CliConfig.__dataclass_fields__}
    if fields.get("threads") is None:
        env = os.environ.get("GE_THREADS")
        try:
            fields["threads"] = _positive(env) if env else 1
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"GE_THREADS: {exc}") from None
    if ns.subcommand == "precompute" and not 1 <= ns.K_S <= ns.K:
        raise UsageError("--ks must not exceed --k")
    return CliConfig(**fields)


def _precompute(cfg: CliConfig) -> int:
    mesh = load_mesh(cfg.mesh)
    cls = classify_vertices(mesh)
    log.info("%d vertices, %d saddles", mesh.n_vertices, cls.n_saddles)
    svg = build_svg(mesh, cls, SvgParams(cfg.K, cfg.K_S), threads=cfg.threads)
    log.info("graph: %d edges", svg.n_edges)
    emb = geodesic_embedding(mesh, cls, m=cfg.m, l=cfg.l, opts=SolverOptions(seed=cfg.seed),
                             threads=cfg.threads)
    save_precomputation(cfg.out, mesh, cls, svg, emb, {"seed": cfg.seed})
    if cfg.json_dump:
        dump_json(cfg.json_dump, load_precomputation(cfg.out, mesh))
    print(f"saddles {cls.n_saddles} edges {svg.n_edges} "
          f"error {100 * emb.error_history[-1]:.4f}%")
    return EXIT_OK


def _query(cfg: CliConfig) -> int:
    mesh = load_mesh(cfg.mesh)
    ctx = load_precomputation(cfg.pre, mesh)
    print(repr(query_distance(ctx, cfg.src, cfg.dst)))
    return EXIT_OK


def _ssad(cfg: CliConfig) -> int:
    mesh = load_mesh(cfg.mesh)
    ctx = load_precomputation(cfg.pre, mesh)
    write_distance_field(cfg.out, single_source(ctx, cfg.src))
    return EXIT_OK


def _eval(cfg: CliConfig) -> int:
    mesh = load_mesh(cfg.mesh)
    ctx = load_precomputation(cfg.pre, mesh)
    sample = sample_pairs(mesh, cfg.pairs, cfg.seed)
    timing = benchmark_queries(ctx, sample)
    report = mean_relative_error(sample, query_source(ctx),
                                 exact_source(mesh, ctx.classification, cfg.threads),
                                 timing=timing)
    report.to_json(cfg.out)
    if cfg.csv:
        report.to_csv(cfg.csv)
    print(f"mean_relative_error {report.mean_relative_error!r}")
    print(f"mean_query_s {timing.mean!r}")
    return EXIT_OK


def _info(cfg: CliConfig) -> int:
    h, meta = read_header(cfg.pre)
    for key, value in h.to_dict().items():
        print(f"{key} {value}")
    emb = meta.get("embedding", {})
    if "reset_rounds" in emb:
        print(f"reset_rounds {len(emb['reset_rounds'])}")
    return EXIT_OK


COMMANDS = {"precompute": _precompute, "query": _query, "ssad": _ssad, "eval": _eval,
            "info": _info}


def run_cli(argv=None) -> int:
    """Run one subcommand and return the exit status."""
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (GeoEmbedError, OSError, ValueError) as exc:
        print(f"geoembed {cfg.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())
