from .tensor import Tensor
from .graph import LayerSpec, ModelGraph
from .mask import ClasswiseMask, SoftLabelBatch, SparsityConfig
from .plan import ChannelScoreTable, FlopsModel, LayerCost, LayerPlan, PruningPlan
from .dataset import AugmentConfig, LabeledImageSet
