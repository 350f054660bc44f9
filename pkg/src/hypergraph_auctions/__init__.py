"""Welfare maximization and truthful mechanisms for hypergraph valuations."""

from .core import (
    UNALLOCATED,
    Allocation,
    HypergraphValuation,
    Instance,
    integer_weights,
    is_supermodular_witness,
    retained_value,
    value,
    welfare,
)
from .demand import demand, demand_bruteforce
from .exact import (
    InstanceTooLarge,
    TreeDecomposition,
    build_tree_decomposition,
    greedy_allocation,
    solve_bruteforce,
    solve_treewidth,
)
from .instances import InstanceFormatError, generate, parse, serialize
from .lp import LinearProgram, LpSolution, solve_lp, solve_with_pricing, to_lp_format
from .midr import MidrConfig, decompose, proxy_valuation, resolve_conflicts, run_midr, solve_config_lp
from .rounding import round_allocation, solve_and_round, solve_compact_lp
from .structured import (
    MechanismOutcome,
    baker_allocate,
    baker_partition,
    chromatic_allocate,
    deviation_search,
    vcg_mechanism,
    vcg_payments,
)

__version__ = "0.1.0"
