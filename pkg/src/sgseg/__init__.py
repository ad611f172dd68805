"""Semantic-guided skip connections and soft-contour boundary supervision
for 3-D encoder-decoder segmentation, with a synthetic blurry-boundary
phantom benchmark and an ablation harness."""

from .boundary import BoundaryTargets, OrganTaxonomy, SoftenConfig, extract_contours, make_targets, soften_contours
from .config import AblationFlags, ExperimentConfig, OptimConfig, learning_rate
from .losses import LossConfig, LossWeights, focal_boundary_loss, segmentation_loss, soft_boundary_loss, total_loss
from .metrics import MetricsReport, asd, dsc, evaluate_case, surface_voxels
from .network import NetworkConfig, NetworkOutputs, SegNet3d, build_network, predict_labels
from .phantom import PhantomConfig, SegSample, generate_dataset, generate_phantom
from .sg_ops import (
    ChannelGateParams,
    SGModuleParams,
    SpatialGateParams,
    sg_forward,
)

__version__ = "0.1.0"
