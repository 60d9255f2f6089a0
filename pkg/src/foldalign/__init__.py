"""Point-cloud autoencoder features and temporal alignment of 3D+t embryo series."""

from .alignreg import (
    AlignmentSequence,
    RegressionSpec,
    RegTrainConfig,
    alignment_error,
    postprocess_monotone,
    predict_alignment,
    train_regressor,
)
from .foldnet import Codeword, DecoderSpec, EncoderSpec, TrainConfig, decode, encode, encode_series, train_autoencoder
from .geometry import (
    EmbryoSimSpec,
    Point3,
    PointCloud,
    SeriesFrameSet,
    SphericalTemplate,
    center,
    jitter,
    make_spherical_template,
    rotate,
    sample_fixed,
    simulate_embryo,
)
from .metrics import MetricReport, chamfer, grad_wrt_out, modified_chamfer
from .warp import WarpedSeries, WarpFamily, WarpSpec, apply_warp, warp_function

__version__ = "0.1.0"
