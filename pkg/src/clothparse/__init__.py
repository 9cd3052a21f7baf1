"""Clothing parsing toolkit.

Post-network pipeline for garment segmentation: outfit gating, dense-CRF
refinement, CRF parameter tuning, evaluation metrics, SLIC-based annotation
tooling, and outfit-descriptor retrieval.
"""

from .core import (DatasetManifest, FormatError, ManifestItem, Palette,
                   PaletteEntry, bundled_palette, load_heatmaps, load_manifest,
                   load_mask, load_palette, mask_from_png_bytes, mask_to_png_bytes,
                   presence_vector, save_heatmaps, save_manifest, save_mask,
                   save_palette, softmax_probmaps, split_dataset, validate_mask,
                   validate_probmaps)
from .crf import (CrfInstance, CrfParams, brute_force_map, decode_map, energy,
                  free_energy, kernel_eval, load_crf_params, mean_field_infer,
                  refine, save_crf_params)
from .gating import (GradCheckReport, ToyModelParams, TrainSchedule,
                     encoder_forward, extract_features, gate_heatmaps, grad_check,
                     load_model, save_model, total_loss, train_staged, trunk_forward)
from .metrics import IouReport, OutfitReport, iou_report, outfit_report, pixel_accuracy
from .retrieval import DescriptorIndex, extract_descriptor, query_nearest
from .superpixel import (SlicConfig, SuperpixelMap, boundary_mask, compute_slic,
                         enforce_connectivity, rgb_to_lab, slic, smooth_mask)
from .tune import TuneResult, mean_iou_objective, tune_crf

__version__ = "0.1.0"
