from .invariants import random_instance, run_selftest

__all__ = ["random_instance", "run_selftest"]
