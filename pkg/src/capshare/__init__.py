"""Capacitated coalition formation games with fair cost sharing."""

from .core import (EPS, CoalitionError, CoalitionStructure, CostOracle, ExplicitCostTable,
                   FunctionOracle, InfeasibleCoalition, Instance, OracleError, Resource,
                   ResourceLimitError, ResourceOracle, ResourceTable, SharedFacilityOracle,
                   TruncatedOracle, default_structure, members_of, structure_cost, to_mask,
                   truncated_oracle, validate_oracle)
from .mechanisms import (Mechanism, PaymentTable, PaymentVector, exclusive_cost, pay_egalitarian,
                         pay_equal, pay_nash, pay_proportional, pay_usage, payments, utility_of)
from .optimum import NoStableStructure, brute_optimum, empirical_spoa, exact_optimum
from .stability import (chain_ratio, detect_cyclic_preference, enumerate_stable_structures,
                        find_blocking_coalition, greedy_stable, improvement_dynamics, is_stable,
                        nash_positive_refinement)

__all__ = [
    "EPS",
    "CoalitionError",
    "CoalitionStructure",
    "CostOracle",
    "ExplicitCostTable",
    "FunctionOracle",
    "InfeasibleCoalition",
    "Instance",
    "OracleError",
    "Resource",
    "ResourceLimitError",
    "ResourceOracle",
    "ResourceTable",
    "SharedFacilityOracle",
    "TruncatedOracle",
    "default_structure",
    "members_of",
    "structure_cost",
    "to_mask",
    "truncated_oracle",
    "validate_oracle",
    "Mechanism",
    "PaymentTable",
    "PaymentVector",
    "exclusive_cost",
    "pay_egalitarian",
    "pay_equal",
    "pay_nash",
    "pay_proportional",
    "pay_usage",
    "payments",
    "utility_of",
    "NoStableStructure",
    "brute_optimum",
    "empirical_spoa",
    "exact_optimum",
    "chain_ratio",
    "detect_cyclic_preference",
    "enumerate_stable_structures",
    "find_blocking_coalition",
    "greedy_stable",
    "improvement_dynamics",
    "is_stable",
    "nash_positive_refinement",
]

__version__ = "0.1.0"
