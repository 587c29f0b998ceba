"""Neural OFDM receiver with post-training weight quantization and a
desk-scale link-level BLER simulator."""

from .channel import ChannelConfig, MOBILITY_TIERS, ebno_to_noise_var
from .link import GridSpec, LinkSimulator, ResourceGrid
from .modulation import get_constellation
from .quantization import QuantConfig, QuantizedTensor, dequantize, quantize, quantize_model
from .receiver import NeuralReceiver, ReceiverConfig, build, featurize, forward
from .sweep import BlerCurve, SweepConfig, run_sweep
from .training import TrainConfig, train

__version__ = "0.1.0"
