from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import ActorCritic, Adam
from .normalizer import RunningNorm
from .ppo import Batch, compute_gae, ppo_loss, ppo_update, schedule
from .train import TrainResult, train

__all__ = [
    "ActorCritic", "Adam", "Batch", "CheckpointError", "RunningNorm", "TrainResult", "compute_gae",
    "load_checkpoint", "ppo_loss", "ppo_update", "save_checkpoint", "schedule", "train",
]
