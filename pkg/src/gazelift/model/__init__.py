from .batch import Batch, denormalize_pose, estimate_pose_scale, make_batch, normalize_pose
from .config import ModelConfig
from .denoiser import (Condition, GazePoseDenoiser, ObjectDescriptors, load_checkpoint,
                       make_denoiser, save_checkpoint)
from .features import HierarchicalFeatures, build_hierarchical_features
