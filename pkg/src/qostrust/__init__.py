"""Two-phase QoS trust identification: a level classifier followed by per-level PNNs."""

from .evaluation import identification_ratio, mae
from .network import LayerSpec, NetworkParams, TrainingConfig, train
from .pipeline import PipelineConfig, PipelineModel, identify_records, identify_service, train_pipeline
from .pnn import PnnModel, TrustVerdict
from .qos_model import AttributeSchema, Polarity, QosRecord, ServiceLevel, TrustLabel

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema",
    "LayerSpec",
    "NetworkParams",
    "PipelineConfig",
    "PipelineModel",
    "PnnModel",
    "Polarity",
    "QosRecord",
    "ServiceLevel",
    "TrainingConfig",
    "TrustLabel",
    "TrustVerdict",
    "identification_ratio",
    "identify_records",
    "identify_service",
    "mae",
    "train",
    "train_pipeline",
]
