"""Counting users whose aggregated visit time over a set of regions reaches a threshold."""

from .errors import CapabilityError, ClavError, ParseError, ResourceError, ValidationError
from .exact import ExactIndex, build_exact, load_exact, query_exact, save_exact, space_report
from .geometric import (
    build_1d,
    build_dd,
    build_multi_k,
    build_tabulation,
    load_geo,
    query_1d,
    query_dd,
    query_multi_k,
    query_tabulation,
    save_geo,
)
from .model import (
    GeoDataset,
    GeoTriplet,
    RectQuery,
    RegionQuery,
    Triplet,
    TripletStore,
    ingest_triplets,
    lookup_time,
    oracle_count,
    oracle_geo_count,
    read_geo_file,
    read_triplet_file,
    write_geo_file,
    write_triplet_file,
)
from .sampling import Estimate, SamplingConfig, estimate_count, estimate_with_guarantee, sample_size
from .sketch import (
    build_sketches,
    load_sketches,
    make_params,
    merge_sketches,
    query_sketches,
    save_sketches,
    sketch_query,
    sketch_region,
)

__version__ = "0.1.0"
