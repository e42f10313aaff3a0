"""Joint differentiable search over augmentation policies and cell architectures.

Subpackages:

* ``autodiff``  define-by-run reverse-mode tape, primitives, seeded rng
* ``augment``   differentiable image ops and the relaxed policy
* ``arch``      mixed-op cells, search/discrete networks, genotypes
* ``data``      datasets, seeded splits, preprocessing pipeline
* ``search``    alternating search loop, optimizers, checkpoints
* ``kernels``   compiled hot loops with a numpy fallback
"""

from .arch import NetworkConfig, discretize, genotype_parse, genotype_serialize, search_space_size
from .augment import DEFAULT_OP_SET, Policy
from .data import PreprocessConfig, load_dataset, split
from .kernels import BACKEND
from .search import SearchConfig, TrainConfig, final_train, search

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DEFAULT_OP_SET", "NetworkConfig", "Policy", "PreprocessConfig", "SearchConfig", "TrainConfig",
    "discretize", "final_train", "genotype_parse", "genotype_serialize", "load_dataset", "search",
    "search_space_size", "split",
]
