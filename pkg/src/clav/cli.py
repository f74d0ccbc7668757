"""Command line interface.

Every subcommand prints one record per line as space separated ``key=value``
fields; values containing whitespace or quotes are JSON string literals, so
``shlex.split`` parses a line. Exit status is 0 on success, 1 on invalid
input and 2 when a build would exceed a budget.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction

from . import exact, geometric, sampling, sketch
from .bench import load_config, row_dict, run_config
from .errors import ClavError, ResourceError, ValidationError
from .model import (
    IdMap,
    RectQuery,
    RegionQuery,
    format_time,
    load_mapping,
    oracle_count,
    oracle_geo_count,
    read_geo_file,
    read_triplet_file,
    save_mapping,
    sidecar_path,
    to_time,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BUDGET = 2


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors, not argparse's default status 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return format_time(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    text = str(value)
    # quote anything that would break whitespace splitting
    if not text or any(ch.isspace() or ch in "\"'" for ch in text):
        return json.dumps(text)
    return text


def emit(out=None, **fields) -> None:
    out = out or sys.stdout
    out.write(" ".join(f"{key}={_fmt(value)}" for key, value in fields.items()) + "\n")


def _threshold(raw: str) -> Fraction:
    try:
        k = to_time(raw)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ValidationError(f"bad threshold {raw!r}") from None
    if k <= 0:
        raise ValidationError(f"threshold k must be positive, got {raw}")
    return k


def _region_ids(raw: str, mapping) -> tuple:
    """Resolve comma separated region names; bare integers fall back to dense ids."""
    out = []
    for name in (part.strip() for part in raw.split(",")):
        if not name:
            raise ValidationError(f"empty region id in {raw!r}")
        if mapping is not None and name in mapping:
            out.append(mapping.lookup(name))
        elif name.lstrip("-").isdigit():
            out.append(int(name))
        else:
            raise ValidationError(f"unknown region id {name!r}")
    return tuple(out)


def _rect(raw: str, dims: int | None):
    try:
        values = [float(x) for x in raw.split(",")]
    except ValueError:
        raise ValidationError(f"bad rectangle {raw!r}") from None
    if len(values) % 2 or not values:
        raise ValidationError("--rect needs lo1,hi1,...,lod,hid")
    d = len(values) // 2
    if dims is not None and d != dims:
        raise ValidationError(f"--rect has {d} dimension(s), --dims says {dims}")
    return tuple(values[0::2]), tuple(values[1::2])


def _index_regions(path):
    side = sidecar_path(path)
    return load_mapping(side)[1] if os.path.exists(side) else None


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    if args.dims is not None or args.geo:
        dataset, users = read_geo_file(args.input)
        if args.dims is not None and args.dims != dataset.d:
            raise ValidationError(f"--dims {args.dims} but the input has d={dataset.d}")
        save_mapping(sidecar_path(args.input), users, IdMap(), "points")
        emit(command="ingest", kind="geo", n=dataset.n, d=dataset.d, N=dataset.N, scale=dataset.scale)
        return EXIT_OK
    store, users, regions = read_triplet_file(args.input)
    save_mapping(sidecar_path(args.input), users, regions)
    emit(command="ingest", kind="triplets", n=store.n, m=store.m, N=store.N, scale=store.scale,
         mapping=sidecar_path(args.input))
    return EXIT_OK


def cmd_build(args) -> int:
    store, users, regions = read_triplet_file(args.input)
    t0 = time.perf_counter()
    index = exact.build_exact(store, args.lam, args.rmax, args.max_tuples, args.max_tables)
    build_seconds = time.perf_counter() - t0
    exact.save_exact(index, args.index)
    save_mapping(sidecar_path(args.index), users, regions)
    rep = exact.space_report(index)
    emit(command="build", structure="exact", lam=index.lam, rmax=index.r_max, n=store.n, m=store.m,
         N=store.N, large_regions=rep.large_regions, tables=rep.tables,
         stored_tuples=rep.stored_tuples, words=rep.words, build_seconds=build_seconds)
    return EXIT_OK


def cmd_query(args) -> int:
    index = exact.load_exact(args.index)
    q = RegionQuery(_region_ids(args.regions, _index_regions(args.index)), _threshold(args.k))
    t0 = time.perf_counter()
    answer = exact.query_exact(index, q)
    query_seconds = time.perf_counter() - t0
    emit(command="query", structure="exact", answer=answer, k=q.k, r=q.r, lam=index.lam,
         rmax=index.r_max, query_seconds=query_seconds)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.rect is not None:
        dataset, _ = read_geo_file(args.input)
        lo, hi = _rect(args.rect, args.dims or dataset.d)
        q = RectQuery(lo, hi, _threshold(args.k))
        emit(command="oracle", structure="geo", answer=oracle_geo_count(dataset, q), k=q.k, d=q.d)
        return EXIT_OK
    if args.regions is None:
        raise ValidationError("oracle needs --regions or --rect")
    store, _, regions = read_triplet_file(args.input)
    q = RegionQuery(_region_ids(args.regions, regions), _threshold(args.k))
    emit(command="oracle", structure="scan", answer=oracle_count(store, q), k=q.k, r=q.r)
    return EXIT_OK


def cmd_estimate(args) -> int:
    store, _, regions = read_triplet_file(args.input)
    q = RegionQuery(_region_ids(args.regions, regions), _threshold(args.k))
    cfg = sampling.SamplingConfig(args.epsilon, args.delta, args.seed, args.s)
    t0 = time.perf_counter()
    est = sampling.estimate_count(store, q, cfg)
    query_seconds = time.perf_counter() - t0
    emit(command="estimate", structure="sampling", estimate=float(est.value), value=est.value,
         s_used=est.s_used, N_Q=est.n_q_triplets, k=q.k, r=q.r, epsilon=args.epsilon,
         delta=args.delta, seed=args.seed, query_seconds=query_seconds)
    return EXIT_OK


def cmd_sketch_build(args) -> int:
    store, users, regions = read_triplet_file(args.input)
    params = sketch.make_params(store.n, args.rmax, _threshold(args.k), args.epsilon, args.delta,
                                args.seed)
    t0 = time.perf_counter()
    sketch_set = sketch.build_sketches(store, params)
    build_seconds = time.perf_counter() - t0
    sketch.save_sketches(sketch_set, params, args.index)
    save_mapping(sidecar_path(args.index), users, regions)
    emit(command="sketch-build", structure="sketch", regions=len(sketch_set), k=params.k,
         rmax=params.r, epsilon=params.epsilon, delta=params.delta, seed=params.seed,
         repetitions=params.repetitions, levels=params.levels, width=params.width,
         bits_per_region=sketch.sketch_size_bits(params), build_seconds=build_seconds)
    return EXIT_OK


def cmd_sketch_query(args) -> int:
    sketch_set, params = sketch.load_sketches(args.index)
    q = RegionQuery(_region_ids(args.regions, _index_regions(args.index[0])),
                    _threshold(args.k) if args.k is not None else params.k)
    t0 = time.perf_counter()
    est = sketch.query_sketches(sketch_set, q, params)
    query_seconds = time.perf_counter() - t0
    emit(command="sketch-query", structure="sketch", estimate=est.value, k=q.k, r=q.r,
         epsilon=params.epsilon, delta=params.delta, seed=params.seed,
         repetitions=params.repetitions, bits_per_region=sketch.sketch_size_bits(params),
         query_seconds=query_seconds)
    return EXIT_OK


GEO_BUILDERS = ("auto", "1d", "dd", "tab", "multi")


def _geo_space(index) -> dict:
    if isinstance(index, geometric.GeoIndex1D):
        return {"intervals": index.intervals}
    if isinstance(index, geometric.GeoIndexD):
        return {"slabs": len(index.slabs), "intervals": index.intervals}
    if isinstance(index, geometric.TabulationIndex):
        return {"entries": int(index.table.size)}
    return {"copies": len(index.copies)}


def cmd_geo_build(args) -> int:
    dataset, _ = read_geo_file(args.input)
    d = args.dims or dataset.d
    if d != dataset.d:
        raise ValidationError(f"--dims {d} but the input has d={dataset.d}")
    kind = args.structure
    if kind == "auto":
        kind = "1d" if d == 1 else "dd"
    t0 = time.perf_counter()
    if kind == "multi":
        if args.K is None:
            raise ValidationError("--structure multi needs --K")
        index = geometric.build_multi_k(dataset, d, _threshold(args.K), args.max_structures)
    else:
        k = _threshold(args.k)
        if kind == "1d":
            index = geometric.build_1d(dataset, k)
        elif kind == "dd":
            index = geometric.build_dd(dataset, d, k, args.max_structures)
        else:
            index = geometric.build_tabulation(dataset, k, args.max_entries)
    build_seconds = time.perf_counter() - t0
    geometric.save_geo(index, args.index)
    emit(command="geo-build", structure=kind, d=d, N=dataset.N, build_seconds=build_seconds,
         **_geo_space(index))
    return EXIT_OK


def cmd_geo_query(args) -> int:
    index = geometric.load_geo(args.index)
    t0 = time.perf_counter()
    if isinstance(index, geometric.MultiKIndex):
        if args.k is None:
            raise ValidationError("a multi-k index needs --k")
        k = _threshold(args.k)
        answer = geometric.query_multi_k(index, _rect(args.rect, index.d), k)
        kind = "multi"
    else:
        k = index.k if args.k is None else _threshold(args.k)
        q = RectQuery(*_rect(args.rect, index.rank_map.d), k)
        if isinstance(index, geometric.GeoIndex1D):
            answer, kind = geometric.query_1d(index, q), "1d"
        elif isinstance(index, geometric.GeoIndexD):
            answer, kind = geometric.query_dd(index, q), "dd"
        else:
            answer, kind = geometric.query_tabulation(index, q), "tab"
    query_seconds = time.perf_counter() - t0
    emit(command="geo-query", structure=kind, answer=answer, k=k, query_seconds=query_seconds)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_config(args.config) if args.config else {}
    if args.seed is not None:
        config["seed"] = args.seed
    if args.input:
        config["input"] = args.input
    if args.rmax is not None:
        config["rmax"] = args.rmax
    if args.lam:
        config["lambdas"] = [int(x) for x in args.lam.split(",")]
    if args.max_tuples is not None:
        config["max_tuples"] = args.max_tuples
    if args.max_tables is not None:
        config["max_tables"] = args.max_tables
    for row in run_config(config):
        emit(command="bench", structure="exact", **row_dict(row))
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _positive_int(raw: str) -> int:
    try:
        value = int(float(raw))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {raw!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {raw!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clav", description="Count users with long aggregated visits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse an input file and write its id mapping")
    p.add_argument("--input", required=True)
    p.add_argument("--geo", action="store_true", help="input is user,x_1..x_d,time")
    p.add_argument("--dims", type=_positive_int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build an exact index snapshot")
    p.add_argument("--input", required=True)
    p.add_argument("--index", required=True, help="output snapshot path")
    p.add_argument("--lambda", dest="lam", type=_positive_int, required=True)
    p.add_argument("--rmax", type=_positive_int, required=True)
    p.add_argument("--max-tuples", type=_positive_int)
    p.add_argument("--max-tables", type=_positive_int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="query an exact index snapshot")
    p.add_argument("--index", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--k", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("oracle", help="brute-force answer straight from the input file")
    p.add_argument("--input", required=True)
    p.add_argument("--regions")
    p.add_argument("--rect")
    p.add_argument("--dims", type=_positive_int)
    p.add_argument("--k", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("estimate", help="sampling estimate")
    p.add_argument("--input", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--k", required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--s", type=_positive_int, help="explicit sample size")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sketch", help="build or query region sketches")
    ssub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = ssub.add_parser("build")
    sp.add_argument("--input", required=True)
    sp.add_argument("--index", required=True, help="output snapshot path")
    sp.add_argument("--k", required=True)
    sp.add_argument("--rmax", type=_positive_int, required=True)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_sketch_build)
    sp = ssub.add_parser("query")
    sp.add_argument("--index", required=True, nargs="+",
                    help="one or more snapshots with identical headers; they are merged")
    sp.add_argument("--regions", required=True)
    sp.add_argument("--k")
    sp.set_defaults(func=cmd_sketch_query)

    p = sub.add_parser("geo", help="build or query geometric indexes")
    gsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    gp = gsub.add_parser("build")
    gp.add_argument("--input", required=True)
    gp.add_argument("--index", required=True, help="output snapshot path")
    gp.add_argument("--dims", type=_positive_int)
    gp.add_argument("--k")
    gp.add_argument("--K", help="largest threshold for --structure multi")
    gp.add_argument("--structure", choices=GEO_BUILDERS, default="auto")
    gp.add_argument("--max-structures", type=_positive_int)
    gp.add_argument("--max-entries", type=_positive_int)
    gp.set_defaults(func=cmd_geo_build)
    gp = gsub.add_parser("query")
    gp.add_argument("--index", required=True)
    gp.add_argument("--rect", required=True, help="lo1,hi1,...,lod,hid")
    gp.add_argument("--k")
    gp.set_defaults(func=cmd_geo_query)

    p = sub.add_parser("bench", help="lambda tradeoff benchmark of the exact index")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--input")
    p.add_argument("--lambda", dest="lam", help="comma separated lambda grid")
    p.add_argument("--rmax", type=_positive_int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-tuples", type=_positive_int)
    p.add_argument("--max-tables", type=_positive_int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.func is cmd_geo_build and args.structure != "multi" and args.k is None:
            raise ValidationError("geo build needs --k")
        return args.func(args)
    except ResourceError as exc:
        emit(sys.stderr, error="budget", message=str(exc))
        return EXIT_BUDGET
    except (ClavError, ValueError) as exc:
        emit(sys.stderr, error="invalid", message=str(exc))
        return EXIT_INVALID
    except OSError as exc:
        emit(sys.stderr, error="io", message=str(exc))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
