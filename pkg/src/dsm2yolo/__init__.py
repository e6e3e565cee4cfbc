"""Building height classes from DSM rasters, YOLO segmentation labels, and mAP scoring."""

from .balance import ClassHistogram, SampleWeights, class_histogram, focal_loss, image_weights
from .evaluation import EvalReport, average_precision, evaluate, match_detections
from .geometry import BBox, BinaryMask, bbox_of, box_iou, mask_iou, normalize, polygon_area, rasterize
from .heightclass import HeightEstimate, classify, estimate_instance, mean_height
from .ingest import DatasetIndex, load_dataset, validate_alignment
from .labels import (ConversionReport, SplitSpec, YoloInstance, convert_dataset, parse_label_file,
                     write_label_file)
from .raster import HeightRaster, read_raster, sample_under_mask

__version__ = "0.1.0"
