from .checkpoint import (
    FORMAT_VERSION,
    CheckpointError,
    ModelCheckpoint,
    load_checkpoint,
    save_checkpoint,
)
from .config import TrainingConfig
from .losses import (
    gan_value,
    reconstruction_loss,
    total_generator_loss,
    vae_loss,
)
from .network import (
    SoftGraph,
    decode,
    discriminate,
    encode_graph,
    message_passing_layer,
    reparameterize,
)
from .training import fine_tune, initial_checkpoint, train

__all__ = [
    "FORMAT_VERSION",
    "CheckpointError",
    "ModelCheckpoint",
    "SoftGraph",
    "TrainingConfig",
    "decode",
    "discriminate",
    "encode_graph",
    "fine_tune",
    "gan_value",
    "initial_checkpoint",
    "load_checkpoint",
    "message_passing_layer",
    "reconstruction_loss",
    "reparameterize",
    "save_checkpoint",
    "total_generator_loss",
    "train",
    "vae_loss",
]
