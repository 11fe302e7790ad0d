import dataclasses
from dataclasses import dataclass

from .. import geometry as geo
from ..scenes import NUM_CLASSES, _coerce


@dataclass
class ModelConfig:
    J: int = geo.NUM_JOINTS
    L: int = 4                 # feature pyramid levels
    d: int = 128               # per-token width
    C: int = 32                # channels per pyramid level
    grid: int = 32             # side of the finest level; level l has grid / 2**l
    K: int = 4                 # sampling points per level and head
    dce_heads: int = 4
    heads: int = 4
    ffn_mult: int = 2
    Q: int = 30
    n_classes: int = NUM_CLASSES
    T: int = 1000
    schedule: str = "cosine"
    pose_scale: float = 1.0    # meters per normalized unit
    use_objects: bool = True
    use_context: bool = True
    use_diffusion: bool = True

    @property
    def d_joint(self):
        """Width of a joint token after the pose-to-context stage: d * (L + 2)."""
        return self.d * (self.L + 2)

    def level_sizes(self):
        return [self.grid >> l for l in range(self.L)]

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        return cls(**{k: _coerce(types[k], v) for k, v in mapping.items() if k in types})
