"""Iris recognition from externally supplied segmentation masks.

Boundary circles are fitted to a coarse mask, the iris is unwrapped into a
polar rectangle, encoded with a Gabor phase code, and compared by masked
fractional Hamming distance. The evaluation tools compute ROC/EER, CMC and
FNMR-at-FMR over capture-time subsets.
"""

from .boundary import BoundaryCircles, Circle, FitError, HoughConfig, fit_circles, fit_mask, mask_edges
from .config import PipelineConfig, load_config, save_config
from .encoding import (FilterBank, FilterBankConfig, GaborSpec, IrisCode, build_filter_bank, encode,
                       read_code, write_code)
from .evaluation import (CmcCurve, RocCurve, ScoreRecord, ScoreSet, compute_cmc, compute_roc, fnmr_at_fmr,
                         fnmr_dynamics, gen_pairs, import_external_scores, subset_by_horizon)
from .manifest import (BinaryMask, IrisImage, Manifest, ManifestError, SampleRecord, load_image, load_manifest,
                       load_mask)
from .matching import MatchResult, NormContext, estimate_N, hamming_at_shift, match_codes, normalize_score
from .normalization import NormalizedIris, normalize
from .pipeline import Skip, StageError, run_all, run_encode, run_match, run_segment
from .report import build_report, write_report
from .segmentation import MaskPair, SegmentationError, Segmenter, cleanup_mask, segment

__version__ = "0.1.0"
