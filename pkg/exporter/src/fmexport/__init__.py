"""Feature-map exporter: small-CNN trainer plus .fms/.seg container writers."""

from .containers import write_fms, write_seg
from .data import Dataset, Split, load_dataset
from .export import ExportJob, capture_maps, export_features, export_masks, resolve_capture_module
from .model import SmallCnn, load_checkpoint, save_checkpoint, train_small_cnn

__version__ = "0.1.0"
