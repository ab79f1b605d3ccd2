"""Multi-task funnel ranking over a recurrent task sequence, with a
region-mask adaptor for multi-region data."""

__version__ = "0.1.0"

from .data import (FeatureLayout, GeneratorConfig, InteractionRecord,  # noqa: F401
                   QueryGroup, generate, read_jsonl, write_jsonl)
from .featuresplit import FeatureShiftSplitter, FeatureSplit, split_features  # noqa: F401
from .gradcheck import grad_check  # noqa: F401
from .models import (ModelOutput, RegionMaskAdaptor, SeqConfig, SeqModel,  # noqa: F401
                     TaskScores, count_params, make_model, plug_md)
from .tensor import Tensor, backward  # noqa: F401
