"""Refine semantic-segmentation borders with a GCN over weighted pixel graphs.

The toolkit ingests a base segmentation (any network's per-pixel output),
selects the pixels near class boundaries, connects them into a sparse
weighted pixel graph, trains a small graph convolutional classifier on those
border pixels only, and merges the refined border labels back into the base
prediction.
"""

from .borders import BorderMask, compute_border_mask
from .features import (FeatureMatrix, FeatureTensor, assemble, load_extras,
                       load_tensor, read_tensor_manifest, save_tensor,
                       standardize_channels, upsample_bilinear,
                       write_tensor_manifest)
from .frames import (LabelMap, RgbFrame, load_label_png, load_rgb_png,
                     save_label_png, save_rgb_png)
from .gcn import (DivergenceError, GcnConfig, GcnGradients, GcnModel, TrainMask,
                  adam_step, backward, forward, init_model, inverted_dropout,
                  load_checkpoint, masked_accuracy, masked_loss, save_checkpoint,
                  softmax_rows)
from .graph import (EdgeWeightParams, MAX_RGB_NORM, NormalizedAdjacency,
                    PixelGraph, build_graph, edge_weight, identity_adjacency,
                    load_graph, renormalize, save_graph)
from .metrics import (ConfusionMatrix, IoUReport, accumulate, evaluate_frames,
                      miou, theoretical_max)
from .pipeline import (FrameRecord, PipelineConfig, PreparedFrame, TrainResult,
                       merge_predictions, predict_merge, prepare_frame,
                       read_dataset_manifest, train, write_training_log)
from .synth import SynthConfig, class_palette, generate, generate_dataset, generate_frame

__version__ = "0.1.0"
