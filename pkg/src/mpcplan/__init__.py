"""Compile relational queries over several parties' private tables into mixed
cleartext/MPC plans, run them on a simulated three-party engine and audit what
each party learned."""
from pathlib import Path

FIXTURES = ("credit", "hhi", "aspirin", "comorbidity", "count_leaf")


def fixture_path(name):
    return Path(__file__).parent / "fixtures" / f"{name}.json"


__version__ = "0.1.0"
