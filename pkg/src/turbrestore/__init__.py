"""Identity-preserving sub-image contextual distances and restoration tools."""

__version__ = "0.1.0"

from .contextual import (AggregationForm, ContextualConfig,
                         cosine_distance_matrix, cx, kernel,
                         normalize_distances, spcx, spcx_grad)
from .degrade import (DegradationConfig, degrade, gaussian_blur,
                      make_elastic_field, warp)
from .hpc import (ModulationParams, PseudoResultSet, ToyGenerator,
                  average_and_uncertainty, encode_mods, hpc_forward,
                  identity_mods, make_result_set, naive_forward)
from .imageio import load_png, make_rng, rng_uniform, save_png, validate_image
from .metrics import EmbeddingSet, deg, psnr, ssim, topk_accuracy
from .objective import (DiscriminatorStub, IdentityExtractor, LossWeights,
                        RandomProjectionExtractor, feature_l1, l2_loss, l_rec,
                        spcx_multi_loss)
from .optimize import OptimizeConfig, optimize_image
from .pk import (PkMode, SubImageCollection, permute_subimages, pk_decompose,
                 pk_recompose)
