"""Cycle-approximate simulator of an event-driven EGM-to-ECG inference engine."""
from .adaptation import AdaptConfig, Histogram, ThresholdAdapter, adapt_threshold, detect, observe
from .hw import MemoryConfig
from .isa import Features, Program, assemble, disassemble
from .mapper import EngineConfig, map_dw, map_layer, map_rir
from .model import Act, Kind, LayerSpec, ModelSpec, Role, dense_forward
from .orchestrator import Pipeline, SimConfig, process_beat, run_stream
from .quant import Quant
from .reference import build_reference_models
from .sim import Engine, run_program

__version__ = "0.1.0"
__all__ = [
    "AdaptConfig", "Histogram", "ThresholdAdapter", "adapt_threshold", "detect", "observe",
    "MemoryConfig", "Features", "Program", "assemble", "disassemble", "EngineConfig",
    "map_dw", "map_layer", "map_rir", "Act", "Kind", "LayerSpec", "ModelSpec", "Role",
    "dense_forward", "Pipeline", "SimConfig", "process_beat", "run_stream", "Quant",
    "build_reference_models", "Engine", "run_program",
]
