"""Slice-embedding retrieval for 3D volumes.

A volume is an ordered sequence of per-slice embedding vectors. The engine
answers three kinds of queries over a database of such volumes: nearest
slices (exact or approximate), the most-hit volume for a whole query volume
or a region of it, and late-interaction re-ranking that also localizes the
matching slices inside the winner.
"""

from .core import (
    NORM_TOLERANCE,
    RegionQuery,
    SliceEmbedding,
    VolumeRecord,
    is_normalized,
    normalize,
)
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    EmptyHitTableError,
    EmptyIndexError,
    EmptyMatrixError,
    InvalidParamsError,
    InvalidSpecError,
    NotNormalizedError,
    RegionAbsentError,
    StoreFormatError,
    UnknownLabelError,
    UnknownVolumeError,
    VersionUnsupportedError,
    VolsearchError,
    ZeroVectorError,
)
from .evaluate import (
    ClassCounts,
    EvalReport,
    Summary,
    format_report,
    localization_ratio_count,
    localization_ratio_rerank,
    localized_recall,
    region_recall,
    slicewise_recall,
    summarize,
    volume_recall,
    write_report_csv,
)
from .index import (
    FlatIndex,
    HnswIndex,
    HnswParams,
    SearchHit,
    flat_search,
    hnsw_build,
    hnsw_search,
)
from .labels import (
    LabelMap,
    SliceLabelTable,
    coarsen,
    load_label_map,
    load_slice_labels,
    save_label_map,
    save_slice_labels,
    totalsegmentator_map,
)
from .rerank import (
    DEFAULT_L,
    RerankResult,
    SimilarityMatrix,
    filter_candidates,
    m_sim,
    rerank,
    rerank_hit_table,
    rs_score,
    similarity_matrix,
    top_l_slices,
    write_localization,
    write_rerank_report,
)
from .retrieval import (
    HitEntry,
    HitTable,
    RetrievedVolume,
    aggregate_count,
    build_hit_table,
    region_subvolume,
    retrieve_volume,
    slice_search,
    write_hit_pairs,
    write_hit_tables,
)
from .runner import RunResult, build_index, run_protocol
from .store import (
    EmbeddingStore,
    StoreManifest,
    fnv1a64,
    read_store,
    store_from_rows,
    write_store,
)
from .synth import SynthSpec, generate, load_spec, save_spec

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "ChecksumMismatchError",
    "ClassCounts",
    "DEFAULT_L",
    "DimensionMismatchError",
    "EmbeddingStore",
    "EmptyHitTableError",
    "EmptyIndexError",
    "EmptyMatrixError",
    "EvalReport",
    "FlatIndex",
    "HitEntry",
    "HitTable",
    "HnswIndex",
    "HnswParams",
    "InvalidParamsError",
    "InvalidSpecError",
    "LabelMap",
    "NORM_TOLERANCE",
    "NotNormalizedError",
    "RegionAbsentError",
    "RegionQuery",
    "RerankResult",
    "RetrievedVolume",
    "RunResult",
    "SearchHit",
    "SimilarityMatrix",
    "SliceEmbedding",
    "SliceLabelTable",
    "StoreFormatError",
    "StoreManifest",
    "Summary",
    "SynthSpec",
    "UnknownLabelError",
    "UnknownVolumeError",
    "VersionUnsupportedError",
    "VolsearchError",
    "VolumeRecord",
    "ZeroVectorError",
    "aggregate_count",
    "build_hit_table",
    "build_index",
    "coarsen",
    "filter_candidates",
    "flat_search",
    "fnv1a64",
    "format_report",
    "generate",
    "hnsw_build",
    "hnsw_search",
    "is_normalized",
    "load_label_map",
    "load_slice_labels",
    "load_spec",
    "localization_ratio_count",
    "localization_ratio_rerank",
    "localized_recall",
    "m_sim",
    "normalize",
    "read_store",
    "region_recall",
    "region_subvolume",
    "rerank",
    "rerank_hit_table",
    "retrieve_volume",
    "rs_score",
    "run_protocol",
    "save_label_map",
    "save_slice_labels",
    "save_spec",
    "similarity_matrix",
    "slice_search",
    "slicewise_recall",
    "store_from_rows",
    "summarize",
    "top_l_slices",
    "volume_recall",
    "write_hit_pairs",
    "write_hit_tables",
    "write_localization",
    "write_report_csv",
    "write_rerank_report",
    "write_store",
]
