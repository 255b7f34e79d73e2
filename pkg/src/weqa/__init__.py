"""Wavelet-domain full-reference image quality (WEQA) and a learned blind counterpart."""
from .corpus import build_corpus, procedural_texture, reference_set
from .descriptors import (FrConfig, SamplingPolicy, TrainingSet, describe_image, describe_pixel,
                          label_pixels, sample_training_set)
from .errors import (ConfigMismatchError, DimensionMismatchError, ImageDecodeError, LevelsError,
                     ManifestError, ModelFormatError, UndefinedCorrelationError,
                     UnsupportedBitDepthError, WeqaError)
from .evaluation import evaluate_corpus, map_compare, plcc, rmse_after_fit, srocc
from .forest import ForestConfig, ForestModel, train_forest
from .fr import FrResult, coupling_matrix, ssim_assess, weqa_assess, weqa_distance
from .imgio import (ColorImage, DatasetManifest, ManifestEntry, apply_distortion, load_image,
                    read_manifest, save_image, write_manifest)
from .kernel import KernelModel, forest_gram, forest_kernel, train_kernel_scorer
from .modelio import load_model, save_model
from .nr import NrResult, nr_assess, nr_assess_kernel
from .wavelet import WaveletPyramid, dwt2, idwt2, wave_vector_at

__version__ = "0.1.0"
