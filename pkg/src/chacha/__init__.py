"""Online AutoML with a champion and a budgeted set of live challengers."""

from chacha.bounds import BoundParams, LabelRange, LossAccumulator
from chacha.config_oracle import OracleParams, TuningTask, oracle
from chacha.engine import Engine, StepRecord
from chacha.ingest import Example, IngestPolicy, csv_to_examples, parse_vw_line
from chacha.learner import Config, LearnerModel

__all__ = [
    "BoundParams",
    "Config",
    "Engine",
    "Example",
    "IngestPolicy",
    "LabelRange",
    "LearnerModel",
    "LossAccumulator",
    "OracleParams",
    "StepRecord",
    "TuningTask",
    "csv_to_examples",
    "oracle",
    "parse_vw_line",
]

__version__ = "0.1.0"
