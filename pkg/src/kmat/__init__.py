"""DoF laboratory for the K-user MISO broadcast channel with delayed and imperfect current CSIT."""
from .channel import ChannelRealization, ConfigError, StreamKey, SystemConfig, sample_channel
from .dof import (
    DofValue,
    Scheme,
    dof_altmat_limit,
    dof_kmat,
    dof_mat,
    dof_outer_sum,
    dof_zf,
    harmonic,
    kmat_mat_crossover,
)

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "DofValue",
    "Scheme",
    "StreamKey",
    "SystemConfig",
    "dof_altmat_limit",
    "dof_kmat",
    "dof_mat",
    "dof_outer_sum",
    "dof_zf",
    "harmonic",
    "kmat_mat_crossover",
    "sample_channel",
]
__version__ = "0.1.0"
