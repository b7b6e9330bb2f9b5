"""Command-line surface: synth, build-index, search, eval.

Exit codes: 0 success; 2 missing files or invalid parameters; 3 unknown
volume, label, or region; 4 empty query store or empty results.

Option precedence is flags > --config JSON > built-in defaults. Every run
writes the fully resolved configuration as JSON next to its outputs, so a
run can be reproduced from its output directory alone.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .core import RegionQuery
from .errors import (
    EmptyHitTableError,
    EmptyIndexError,
    InvalidParamsError,
    InvalidSpecError,
    RegionAbsentError,
    StoreFormatError,
    UnknownLabelError,
    UnknownVolumeError,
    VolsearchError,
    ZeroVectorError,
)
from .evaluate import format_report, write_report_csv
from .index import FlatIndex, HnswIndex, HnswParams
from .labels import LabelMap, load_label_map, load_slice_labels, save_slice_labels
from .rerank import rerank_hit_table, write_localization, write_rerank_report
from .retrieval import region_subvolume, retrieve_volume, write_hit_pairs, write_hit_tables
from .runner import run_protocol
from .store import read_store, write_store
from .synth import SynthSpec, generate, save_spec

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_UNKNOWN_ID = 3
EXIT_EMPTY = 4

DEFAULTS: dict[str, object] = {
    "kind": "flat",
    "m": 16,
    "ef_construction": 200,
    "ef_search": 128,
    "protocol": "volume",
    "granularity": "fine104",
    "rerank": False,
    "l": 15,
    "exclude_self": False,
    "stride": 1,
    "threads": os.cpu_count() or 1,
    "seed": 0,
    # synth corpus shape
    "volumes": 40,
    "labels_n": 20,
    "slices": [24, 48],
    "signature_size": 3,
    "dim": 32,
    "core_fraction": 0.6,
    "sigma": 0.05,
    "queries": None,
}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file, and explicit flags."""
    merged = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise InvalidParamsError(f"{config_path}: config must be a JSON object")
        merged.update(file_cfg)
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _require(cfg: dict, key: str, flag: str) -> str:
    value = cfg.get(key)
    if not value:
        raise InvalidParamsError(f"missing required option {flag}")
    return str(value)


def _check_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return p


def _out_dir(cfg: dict) -> Path:
    out = Path(_require(cfg, "out", "--out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved(cfg: dict, out: Path, command: str) -> None:
    doc = {"command": command}
    doc.update({k: v for k, v in sorted(cfg.items())})
    with open(out / "resolved_config.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _hnsw_params(cfg: dict) -> HnswParams:
    return HnswParams(
        m=int(cfg["m"]),
        ef_construction=int(cfg["ef_construction"]),
        ef_search=int(cfg["ef_search"]),
        seed=int(cfg["seed"]),
    )


def _make_index(cfg: dict, db_store):
    kind = cfg["kind"]
    index_path = cfg.get("index")
    if kind == "flat":
        return FlatIndex(db_store)
    if kind == "hnsw":
        if index_path and Path(index_path).is_file():
            return HnswIndex.load(index_path, db_store)
        return HnswIndex.build(db_store, _hnsw_params(cfg))
    raise InvalidParamsError(f"unknown index kind {kind!r}")


def _load_label_map(cfg: dict) -> LabelMap | None:
    path = cfg.get("label_map")
    if not path:
        return None
    return load_label_map(_check_file(str(path), "label map"))


def _granularity(cfg: dict) -> tuple[str, bool]:
    gran = str(cfg["granularity"])
    if gran not in ("coarse29", "fine104"):
        raise InvalidParamsError(f"unknown granularity {gran!r}")
    return gran, gran == "coarse29"


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    spec = SynthSpec(
        n_volumes=int(cfg["volumes"]),
        n_labels=int(cfg["labels_n"]),
        slices_range=(int(cfg["slices"][0]), int(cfg["slices"][1])),
        signature_size=int(cfg["signature_size"]),
        dim=int(cfg["dim"]),
        core_fraction=float(cfg["core_fraction"]),
        noise_sigma=float(cfg["sigma"]),
        n_queries=None if cfg["queries"] is None else int(cfg["queries"]),
        seed=int(cfg["seed"]),
    )
    db_store, query_store, labels = generate(spec)
    write_store(db_store, out / "db.vge1")
    write_store(query_store, out / "query.vge1")
    save_slice_labels(labels, out / "labels.csv")
    save_spec(spec, out / "synth_spec.json")
    _write_resolved(cfg, out, "synth")
    print(
        f"wrote {db_store.row_count} database rows / {query_store.row_count} query rows "
        f"({spec.n_volumes} volumes, {spec.n_labels} labels, dim {spec.dim}) to {out}"
    )
    return EXIT_OK


def cmd_build_index(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    db_path = _check_file(_require(cfg, "db", "--db"), "database store")
    out_path = Path(_require(cfg, "out", "--out"))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    db_store = read_store(db_path)
    kind = cfg["kind"]
    start = time.perf_counter()
    if kind == "flat":
        # Exact search needs no precomputed structure; record a marker so
        # downstream runs know which index kind the store was prepared for.
        with open(out_path, "w", encoding="utf-8") as f:
            json.dump(
                {"kind": "flat", "rows": db_store.row_count, "dim": db_store.dim}, f, indent=2
            )
            f.write("\n")
    elif kind == "hnsw":
        index = HnswIndex.build(db_store, _hnsw_params(cfg))
        index.save(out_path)
    else:
        raise InvalidParamsError(f"unknown index kind {kind!r}")
    elapsed = time.perf_counter() - start
    print(f"indexed {db_store.row_count} rows ({kind}) in {elapsed:.2f}s -> {out_path}")
    return EXIT_OK


def _parse_region_label(token: str, label_map: LabelMap | None, coarse: bool) -> int:
    try:
        return int(token)
    except ValueError:
        pass
    if label_map is None:
        raise UnknownLabelError(f"region {token!r} needs --label-map to resolve by name")
    return label_map.coarse_id_by_name(token) if coarse else label_map.fine_id(token)


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    db_store = read_store(_check_file(_require(cfg, "db", "--db"), "database store"))
    query_store = read_store(_check_file(_require(cfg, "query", "--query"), "query store"))
    if query_store.row_count == 0:
        raise EmptyIndexError("query store has no rows")
    label_map = _load_label_map(cfg)
    _, coarse = _granularity(cfg)
    index = _make_index(cfg, db_store)
    if cfg.get("region"):
        volume_id, token = cfg["region"][0], cfg["region"][1]
        labels = load_slice_labels(_check_file(_require(cfg, "labels", "--labels"), "label table"))
        region = _parse_region_label(str(token), label_map, coarse)
        query = region_subvolume(str(volume_id), region, labels, coarse, label_map)
    elif cfg.get("query_volume"):
        query = query_store.volume(str(cfg["query_volume"]))
    else:
        raise InvalidParamsError("need --query-volume or --region")
    retrieved, table = retrieve_volume(
        query, index, query_store,
        exclude_self=bool(cfg["exclude_self"]), stride=int(cfg["stride"]),
    )
    write_hit_tables([table], out / "hits.csv")
    write_hit_pairs([table], out / "hit_pairs.csv")
    result_id = retrieved.volume_id
    if cfg["rerank"]:
        q_matrix = query_store.volume_matrix(query.volume_id)
        if isinstance(query, RegionQuery):
            lo, hi = query.slice_range
            q_matrix = q_matrix[lo : hi + 1]
        rr = rerank_hit_table(q_matrix, table, db_store, int(cfg["l"]))
        write_rerank_report([rr], out / "rerank.csv")
        write_localization([rr], out / "localization.csv")
        result_id = rr.winner
    _write_resolved(cfg, out, "search")
    print(
        f"{table.query_id}: rank-1 volume {result_id} "
        f"(hits {retrieved.hit_count}, score sum {retrieved.score_sum:.6f})"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    db_store = read_store(_check_file(_require(cfg, "db", "--db"), "database store"))
    query_store = read_store(_check_file(_require(cfg, "query", "--query"), "query store"))
    if query_store.row_count == 0 or not query_store.volume_ids():
        raise EmptyIndexError("query store has no rows")
    labels = load_slice_labels(_check_file(_require(cfg, "labels", "--labels"), "label table"))
    label_map = _load_label_map(cfg)
    granularity, coarse = _granularity(cfg)
    if coarse and label_map is None:
        raise InvalidParamsError("--granularity coarse29 needs --label-map")
    protocol = str(cfg["protocol"])
    if protocol not in ("slice", "volume", "region", "localized"):
        raise InvalidParamsError(f"unknown protocol {protocol!r}")
    index = _make_index(cfg, db_store)
    result = run_protocol(
        protocol,
        db_store,
        query_store,
        labels,
        index,
        label_map=label_map,
        granularity=granularity,
        use_rerank=bool(cfg["rerank"]),
        l=int(cfg["l"]),
        exclude_self=bool(cfg["exclude_self"]),
        stride=int(cfg["stride"]),
        threads=int(cfg["threads"]),
    )
    if label_map is not None:
        name_of = label_map.coarse_name if coarse else label_map.fine_name
        all_labels = range(label_map.n_coarse if coarse else label_map.n_fine)
    else:
        name_of = str
        all_labels = None
    write_report_csv(result.report, out / "report.csv", name_of, all_labels)
    write_hit_tables(result.hit_tables, out / "hits.csv")
    write_hit_pairs(result.hit_tables, out / "hit_pairs.csv")
    if result.rerank_results:
        write_rerank_report(result.rerank_results, out / "rerank.csv")
        write_localization(result.rerank_results, out / "localization.csv")
    _write_resolved(cfg, out, "eval")
    print(format_report(result.report, name_of, all_labels))
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)


def _add_index_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["flat", "hnsw"], default=None)
    p.add_argument("--m", type=int, default=None, help="max neighbors per node (upper layers)")
    p.add_argument("--ef-construction", dest="ef_construction", type=int, default=None)
    p.add_argument("--ef-search", dest="ef_search", type=int, default=None)


def _add_run_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--db", default=None, help="database store (.vge1)")
    p.add_argument("--query", default=None, help="query store (.vge1)")
    p.add_argument("--labels", default=None, help="slice label CSV")
    p.add_argument("--label-map", dest="label_map", default=None, help="label map TSV")
    p.add_argument("--index", default=None, help="prebuilt index file (.vgi1)")
    p.add_argument("--granularity", choices=["coarse29", "fine104"], default=None)
    p.add_argument("--rerank", action="store_const", const=True, default=None)
    p.add_argument("--L", dest="l", type=int, default=None, help="top-L localization slices")
    p.add_argument("--exclude-self", dest="exclude_self", action="store_const", const=True, default=None)
    p.add_argument("--stride", type=int, default=None, help="search every n-th query slice")
    p.add_argument("--out", default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volsearch",
        description="Slice-embedding retrieval over 3D volumes: indexing, search, re-ranking, evaluation.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--volumes", type=int, default=None)
    p.add_argument("--labels-n", dest="labels_n", type=int, default=None)
    p.add_argument("--slices", type=int, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--signature-size", dest="signature_size", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--core-fraction", dest="core_fraction", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--queries", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-index", help="build and persist a search index")
    p.add_argument("--db", default=None, help="database store (.vge1)")
    p.add_argument("--out", default=None, help="index output path (.vgi1)")
    _add_index_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("search", help="run one volume or region query")
    p.add_argument("--query-volume", dest="query_volume", default=None)
    p.add_argument(
        "--region", nargs=2, default=None, metavar=("VOLUME_ID", "LABEL"),
        help="region query: volume id plus label id or name",
    )
    _add_run_opts(p)
    _add_index_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="run a full evaluation protocol")
    p.add_argument("--protocol", choices=["slice", "volume", "region", "localized"], default=None)
    p.add_argument("--threads", type=int, default=None)
    _add_run_opts(p)
    _add_index_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UnknownVolumeError, UnknownLabelError, RegionAbsentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_ID
    except (EmptyIndexError, EmptyHitTableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (
        FileNotFoundError,
        IsADirectoryError,
        StoreFormatError,
        InvalidParamsError,
        InvalidSpecError,
        ZeroVectorError,
        VolsearchError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
