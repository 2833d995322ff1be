"""Compile attributed graphs into natural-language instruction datasets.

The pipeline: load a graph, enumerate prompt templates, sample k-hop
neighborhoods under a token budget, render them to canonical text, and
assemble classification and link-prediction instances.  A grammar-strict
parser inverts the rendering, and a prompt-only label-propagation oracle
checks that the text carries the graph structure intact.
"""

__version__ = "0.1.0"

from .budget import (
    Envelope,
    NeighborhoodSample,
    TokenCounter,
    count_tokens,
    exhaustive_sample,
    load_token_table,
    parse_counter_spec,
    sample_neighborhood,
)
from .errors import GraphTextError, StructureParseError, ValidationError
from .evaluate import (
    OracleConfig,
    PredictionRecord,
    accuracy,
    match_predictions,
    normalize_answer,
    oracle_classify,
    oracle_classify_graph,
    read_predictions,
    train_majority,
    training_labels,
    weighted_vote,
    write_predictions,
)
from .graph import (
    Graph,
    apply_splits_file,
    load_graph_dir,
    save_graph_dir,
    write_splits_csv,
    LoadReport,
    Neighborhood,
    PathFinder,
    PathSet,
    PerClassSplit,
    RatioSplit,
    cumulative_levels,
    khop_neighbors,
    load_graph,
    make_split,
    paths_to_level,
    read_glmf,
    write_glmf,
)
from .instances import (
    DatasetConfig,
    Instance,
    build_dataset,
    build_lp_discriminative,
    build_lp_generative,
    build_nc_instance,
    draw_lp_candidate,
    draw_lp_target,
    instance_structure,
    lp_disc_query,
    lp_gen_query,
    nc_prefix,
    nc_query,
    read_dataset,
    write_dataset,
)
from .parsing import ParsedNeighborhood, RoundtripReport, parse_structure, verify_roundtrip
from .prompts import (
    PromptSpec,
    StructureDescription,
    Task,
    decode_prompt_id,
    enumerate_family,
    node_token,
    prompt_id,
    render_structure,
)
from .seeding import derive_rng, derive_seed
from .vocab import VocabManifest, build_vocab_manifest, read_vocab_manifest, write_vocab_manifest

__all__ = [
    "__version__",
    "Envelope",
    "NeighborhoodSample",
    "TokenCounter",
    "apply_splits_file",
    "count_tokens",
    "load_graph_dir",
    "load_token_table",
    "exhaustive_sample",
    "parse_counter_spec",
    "sample_neighborhood",
    "GraphTextError",
    "StructureParseError",
    "ValidationError",
    "OracleConfig",
    "PredictionRecord",
    "accuracy",
    "match_predictions",
    "normalize_answer",
    "oracle_classify",
    "oracle_classify_graph",
    "read_predictions",
    "save_graph_dir",
    "train_majority",
    "training_labels",
    "write_predictions",
    "weighted_vote",
    "Graph",
    "LoadReport",
    "Neighborhood",
    "PathFinder",
    "PathSet",
    "PerClassSplit",
    "RatioSplit",
    "cumulative_levels",
    "khop_neighbors",
    "load_graph",
    "make_split",
    "paths_to_level",
    "read_glmf",
    "write_glmf",
    "DatasetConfig",
    "Instance",
    "build_dataset",
    "build_lp_discriminative",
    "build_lp_generative",
    "build_nc_instance",
    "draw_lp_candidate",
    "draw_lp_target",
    "lp_disc_query",
    "lp_gen_query",
    "nc_prefix",
    "nc_query",
    "instance_structure",
    "read_dataset",
    "write_dataset",
    "ParsedNeighborhood",
    "RoundtripReport",
    "parse_structure",
    "verify_roundtrip",
    "PromptSpec",
    "StructureDescription",
    "Task",
    "decode_prompt_id",
    "enumerate_family",
    "node_token",
    "prompt_id",
    "render_structure",
    "derive_rng",
    "derive_seed",
    "VocabManifest",
    "build_vocab_manifest",
    "read_vocab_manifest",
    "write_splits_csv",
    "write_vocab_manifest",
]
