"""Transmission-cluster detection from sequence alignments and phylogenies.

Distance-threshold clustering on supported clades, largest-gap
friendship clustering, a clade-partition MCMC with co-clustering
summaries, walktrap communities, partition scoring against partial
references, growth reporting, and a planted-cluster simulator.
"""

from .community import (
    WeightedGraph,
    average_adjacency,
    modularity,
    partition_adjacency,
    walktrap_communities,
)
from .distance import (
    DistanceMatrix,
    MatrixKind,
    PairComparison,
    build_distance_matrix,
    compare_pair,
    k80_distance,
    p_distance,
    read_matrix_binary,
    read_matrix_phylip,
    write_matrix_binary,
    write_matrix_phylip,
)
from .errors import DataError
from .evaluation import (
    PartitionSummary,
    ReferenceSet,
    adjusted_rand_index,
    cutpoint_sweep,
    method_cocluster_matrix,
    partial_gold_transform,
    partition_summary,
    reference_ari,
)
from .gap import GapConfig, friend_set, gap_cluster
from .growth import (
    ClusterGrowthRow,
    GrowthWindow,
    emit_growth_svg,
    growth_report,
    phi_breakdown,
)
from .io_formats import (
    Alignment,
    CaseMetadata,
    Partition,
    SequenceRecord,
    Stage,
    load_fasta,
    load_metadata,
    load_newick,
    load_newick_list,
    load_partition,
    fasta_string,
    metadata_string,
    newick_string,
    partition_string,
    parse_fasta,
    parse_metadata,
    parse_newick,
    parse_newick_list,
    parse_partition,
    write_fasta,
    write_metadata,
    write_newick,
    write_partition,
)
from .mcmc import (
    ChainConfig,
    ChainState,
    ChainSummary,
    ReservedConstants,
    initialize_chain,
    linkage_estimate,
    load_chain_summary,
    log_posterior,
    run_chain,
    save_chain_summary,
)
from .phylo import (
    Clade,
    Node,
    PhyloTree,
    annotate_support,
    enumerate_clades,
    majority_consensus,
    patristic_matrix,
    root_at_outgroup,
)
from .simulate import (
    SimConfig,
    simulate_alignment,
    simulate_metadata,
    simulate_tree,
)
from .threshold import (
    ClusterCriteria,
    Statistic,
    percentile_cutoff,
    threshold_cluster,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "CaseMetadata",
    "ChainConfig",
    "ChainState",
    "ChainSummary",
    "Clade",
    "ClusterCriteria",
    "ClusterGrowthRow",
    "DataError",
    "DistanceMatrix",
    "GapConfig",
    "GrowthWindow",
    "MatrixKind",
    "Node",
    "PairComparison",
    "Partition",
    "PartitionSummary",
    "PhyloTree",
    "ReferenceSet",
    "ReservedConstants",
    "SequenceRecord",
    "SimConfig",
    "Stage",
    "Statistic",
    "WeightedGraph",
    "adjusted_rand_index",
    "annotate_support",
    "average_adjacency",
    "build_distance_matrix",
    "compare_pair",
    "cutpoint_sweep",
    "emit_growth_svg",
    "enumerate_clades",
    "friend_set",
    "gap_cluster",
    "growth_report",
    "initialize_chain",
    "k80_distance",
    "linkage_estimate",
    "load_chain_summary",
    "load_fasta",
    "load_metadata",
    "load_newick",
    "load_newick_list",
    "load_partition",
    "log_posterior",
    "majority_consensus",
    "method_cocluster_matrix",
    "modularity",
    "p_distance",
    "fasta_string",
    "metadata_string",
    "newick_string",
    "partition_string",
    "parse_fasta",
    "parse_metadata",
    "parse_newick",
    "parse_newick_list",
    "parse_partition",
    "partial_gold_transform",
    "partition_adjacency",
    "partition_summary",
    "patristic_matrix",
    "percentile_cutoff",
    "phi_breakdown",
    "read_matrix_binary",
    "read_matrix_phylip",
    "reference_ari",
    "root_at_outgroup",
    "run_chain",
    "save_chain_summary",
    "simulate_alignment",
    "simulate_metadata",
    "simulate_tree",
    "threshold_cluster",
    "walktrap_communities",
    "write_fasta",
    "write_matrix_binary",
    "write_matrix_phylip",
    "write_metadata",
    "write_newick",
    "write_partition",
]
