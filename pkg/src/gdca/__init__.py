"""GAN-based x4 single-image super-resolution with dual discriminators and channel attention."""

from .tensor import DOUBLE, SINGLE, Precision, Tape, Tensor, backward, finite_diff_grad
from .models import Discriminator, FeatureExtractor, Generator, GeneratorConfig
from .losses import LossWeights
from .data import Image

__version__ = "0.1.0"
