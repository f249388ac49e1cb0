"""Siamese embedding network trained with the contrastive loss."""

from .checkpoint import (checkpoint_bytes, load_checkpoint, params_from_bytes,
                         save_checkpoint)
from .network import (NetworkConfig, NetworkParams, backward_batch, embedding_distance,
                      forward, forward_batch)
from .training import (EpochStats, SgdOptions, TrainingPair, batch_loss_and_gradients,
                       classify, contrastive_loss, label_pairs, loss_gradients, mine_pairs,
                       pair_loss, train, training_log_csv)

__all__ = [
    "EpochStats", "NetworkConfig", "NetworkParams", "SgdOptions", "TrainingPair",
    "backward_batch", "batch_loss_and_gradients", "checkpoint_bytes", "classify",
    "contrastive_loss", "embedding_distance", "forward", "forward_batch", "label_pairs",
    "load_checkpoint", "loss_gradients", "mine_pairs", "pair_loss", "params_from_bytes",
    "save_checkpoint", "train", "training_log_csv",
]
