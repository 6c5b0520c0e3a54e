"""Unsupervised hyperspectral super-resolution trained on dead-leaves
abundance maps."""
from .deadleaves import GenConfig, asc_normalize, generate_abundance, generate_dataset
from .degrade import PsfConfig, bicubic_upsample_baseline, degrade_pair, gaussian_kernel
from .htf import load_tensor, save_tensor
from .metrics import MetricsReport, ergas, evaluate, mpsnr, sam_mean
from .mix import mix, reconstruct_hr, unmix_oracle
from .tensor import AbundanceMap, tensor_new, validate_abundance

__version__ = "0.1.0"
