"""slopt: randomized search for faster straightline u64 arithmetic.

Parse a JSON function description, lower it to x86-64 through a template
catalog and a Belady-spilling register allocator, execute it in-process, and
hill-climb over instruction order and instruction selection using measured
(rdtsc) or simulated cycle counts, verifying every candidate against a
reference interpreter.
"""

from .emitter import AsmProgram, assemble_ir, catalog_for
from .errors import SloptError
from .ir import FunctionSpec, parse_function
from .measure import MeasurementConfig, compare, measure_program, simulated_cost
from .model import Model
from .optimizer import OptimizerConfig, optimize, write_outputs

__version__ = "1.0.0"

__all__ = [
    "AsmProgram",
    "FunctionSpec",
    "MeasurementConfig",
    "Model",
    "OptimizerConfig",
    "SloptError",
    "assemble_ir",
    "catalog_for",
    "compare",
    "measure_program",
    "optimize",
    "parse_function",
    "simulated_cost",
    "write_outputs",
    "__version__",
]
