"""Contribution measurement for horizontally and vertically federated learning."""

from .data import (
    Dataset,
    HorizontalPartition,
    RawTable,
    VerticalPartition,
    horizontal_split,
    load_csv,
    prepare,
    vertical_split,
)
from .federation import (
    assemble_federation,
    federated_group_shapley,
    federated_predict,
    privacy_audit,
)
from .horizontal import influence_group_batch, influence_group_sum, influence_single
from .model import ModelConfig, TrainedModel, accuracy, make_linear_oracle, train
from .shapley import (
    BackgroundSpec,
    delta_Q,
    interaction_index,
    shapley_exact,
    shapley_group_sum,
    shapley_mc,
)

__version__ = "0.1.0"
