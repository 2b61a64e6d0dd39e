"""CSI feedback compression lab.

Generates precoder channel matrices from a synthetic clustered-multipath
MIMO-OFDM channel, compresses them with Type-II style DFT codebooks and a
convolutional autoencoder, and compares reconstruction fidelity against
feedback-bit budgets.
"""

from .channel import (
    AntennaConfig,
    ChannelParams,
    OfdmConfig,
    build_precoder_matrix,
    dominant_eigenvector,
    generate_samples,
    synthesize_rb_channels,
)
from .codebook import (
    CodebookReport,
    QuantConfig,
    SdBasis,
    build_sd_basis,
    count_bits,
    rel15_compress,
    rel16_compress,
)
from .convolution import BACKEND as CONV_BACKEND
from .metrics import NOISE_PRESETS, NoiseSpec, add_awgn, cosine_similarity, nmse
from .model import (
    LatentCode,
    ModelConfig,
    PolarDenseNet,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Tensor, concat, no_grad
from .train import TrainConfig, evaluate_model, train

__version__ = "0.1.0"
