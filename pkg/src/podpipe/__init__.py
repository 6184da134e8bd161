"""Plot-level soybean pod counting from ground-robot field collections."""

from .analytics import CorrelationReport, PairedSeries, filter_2sigma, linear_fit, pearson_r, run_stages
from .errors import PodPipeError
from .fieldmodel import FieldLayout, invert_id, serpentine_id
from .fieldsim import SimConfig, generate_collections, generate_ground_truth
from .pipeline import PipelineResult, run_pipeline

__version__ = "0.1.0"
