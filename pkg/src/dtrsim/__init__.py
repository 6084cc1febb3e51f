"""Trace-driven simulator for dynamic tensor rematerialization."""

from .errors import (DTRError, InvariantError, MalformedLogError, OutOfMemory,
                     ThrashAbort)
from .generators import (AdversaryReport, gen_linear, gen_random_dag,
                         run_adversary)
from .graph import NEG_INF, DependencyGraph, OutputSpec
from .heuristics import HEURISTIC_NAMES, HeuristicSpec, Score
from .metadata import Metadata
from .oplog import OpLog, parse, read_log, serialize, write_log
from .runtime import POLICIES, Runtime, SimOutcome, Telemetry, run

__version__ = "0.1.0"
