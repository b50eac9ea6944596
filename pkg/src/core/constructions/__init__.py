from .appendix import a_delta_matrix, interval_example, unbounded_union_example
from .finite_groups import finite_group_suite, generator_field
from .free_group import free_group_ball, free_group_family

__all__ = [
    "a_delta_matrix",
    "finite_group_suite",
    "free_group_ball",
    "free_group_family",
    "generator_field",
    "interval_example",
    "unbounded_union_example",
]
