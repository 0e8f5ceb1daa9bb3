"""
CRUD operations for the experiment registry.
"""
from .experiments import (
    create_experiment,
    get_experiments,
    get_experiment_by_id,
    get_experiment_runs,
    delete_experiment,
)

__all__ = [
    "create_experiment",
    "get_experiments",
    "get_experiment_by_id",
    "get_experiment_runs",
    "delete_experiment",
]
