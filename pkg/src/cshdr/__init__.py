"""Single-shot coded-exposure HDR: capture simulation, convolutional sparse
coding reconstruction, filter learning, patch baseline, and evaluation."""

__version__ = "0.1.0"

from .imagery import (FormatError, LdrImage, RadianceImage, load_hdr, load_pfm,
                      load_png, luminance, save_hdr, save_pfm, save_png,
                      tonemap_display)
from .masks import (ExposureMask, gen_binary, gen_four_exposure,
                    gen_fixed_pattern, gen_gaussian, gen_interleaved,
                    gen_uniform, load_mask, save_mask)
from .capture import (CaptureConfig, CodedLdrImage, gaussian_psf, delta_psf,
                      linearize, load_coded, meter, reliability_mask,
                      save_coded, simulate_capture)
from .cscengine import (CscOperator, FeatureMaps, FilterBank, load_bank,
                        objective, prox_l1, prox_masked_data, save_bank,
                        spectral_solve, synthesize)
from .reconstruct import (NumericalError, SolverConfig, SolverTrace,
                          init_offset, reconstruct_hdr, reconstruct_video)
from .learning import (TrainingSet, learn_filters, local_contrast_normalize,
                       project_filter)
from .baseline import (PatchDictionary, build_dct_dictionary, omp_solve,
                       patch_reconstruct)
from .metrics import (EvalReport, align_scale, evaluate, false_color_stops,
                      psnr, scanline_profile, ssim_map)
from .scenes import step_edge_scene, synthetic_hdr_scene, training_rasters
